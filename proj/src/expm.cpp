#include "qapause/linalg.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

namespace qapause {

namespace {

// Backward-error bounds for double precision (Higham 2005, Table 2.3).
constexpr std::array<double, 5> kTheta = {1.495585217958292e-2, 2.539398330063230e-1,
                                          9.504178996162932e-1, 2.097847961257068,
                                          5.371920351148152};

constexpr std::array<double, 4> kB3 = {120.0, 60.0, 12.0, 1.0};
constexpr std::array<double, 6> kB5 = {30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0};
constexpr std::array<double, 8> kB7 = {17297280.0, 8648640.0, 1995840.0, 277200.0,
                                       25200.0,    1512.0,    56.0,      1.0};
constexpr std::array<double, 10> kB9 = {17643225600.0, 8821612800.0, 2075673600.0, 302702400.0,
                                        30270240.0,    2162160.0,    110880.0,     3960.0,
                                        90.0,          1.0};
constexpr std::array<double, 14> kB13 = {
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0, 1187353796428800.0,
    129060195264000.0,   10559470521600.0,    670442572800.0,     33522128640.0,
    1323241920.0,        40840800.0,          960960.0,           16380.0,
    182.0,               1.0};

template <std::size_t K>
CMatrix pade_low(const CMatrix& a, const std::array<double, K>& b) {
  const auto n = a.rows();
  const CMatrix ident = CMatrix::Identity(n, n);
  const CMatrix a2 = a * a;
  CMatrix even = b[0] * ident;
  CMatrix odd = b[1] * ident;
  CMatrix power = ident;
  for (std::size_t k = 2; k < K; k += 2) {
    power = power * a2;
    even += b[k] * power;
    odd += b[k + 1] * power;
  }
  const CMatrix u = a * odd;
  return (even - u).partialPivLu().solve(even + u);
}

CMatrix pade13(const CMatrix& a) {
  const auto n = a.rows();
  const auto& b = kB13;
  const CMatrix ident = CMatrix::Identity(n, n);
  const CMatrix a2 = a * a;
  const CMatrix a4 = a2 * a2;
  const CMatrix a6 = a4 * a2;
  const CMatrix inner_u = b[13] * a6 + b[11] * a4 + b[9] * a2;
  const CMatrix u = a * (a6 * inner_u + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident);
  const CMatrix inner_v = b[12] * a6 + b[10] * a4 + b[8] * a2;
  const CMatrix v = a6 * inner_v + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident;
  return (v - u).partialPivLu().solve(v + u);
}

}  // namespace

CMatrix expm(const CMatrix& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("expm: matrix must be square");
  if (!a.allFinite()) throw std::domain_error("expm: non-finite input");
  if (a.rows() == 0) return a;

  const double norm = a.cwiseAbs().colwise().sum().maxCoeff();
  if (norm <= kTheta[0]) return pade_low(a, kB3);
  if (norm <= kTheta[1]) return pade_low(a, kB5);
  if (norm <= kTheta[2]) return pade_low(a, kB7);
  if (norm <= kTheta[3]) return pade_low(a, kB9);

  int squarings = 0;
  if (norm > kTheta[4]) squarings = std::max(0, static_cast<int>(std::ceil(std::log2(norm / kTheta[4]))));
  CMatrix r = pade13(a / std::ldexp(1.0, squarings));
  for (int k = 0; k < squarings; ++k) r = r * r;
  return r;
}

}  // namespace qapause
