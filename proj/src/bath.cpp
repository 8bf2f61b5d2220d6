#include "qapause/bath.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <queue>
#include <sstream>

namespace qapause {

BathParams BathParams::make(double eta, double temperature, double omega_c) {
  if (!(eta >= 0.0)) throw std::invalid_argument("bath: eta must be >= 0");
  if (!(temperature > 0.0)) throw std::invalid_argument("bath: temperature must be > 0");
  if (!(omega_c > 0.0)) throw std::invalid_argument("bath: omega_c must be > 0");
  BathParams p;
  p.eta = eta;
  p.temperature = temperature;
  p.beta = 1.0 / temperature;
  p.omega_c = omega_c;
  return p;
}

std::vector<std::string> BathParams::warnings() const {
  std::vector<std::string> out;
  if (beta * omega_c < 10.0) {
    std::ostringstream msg;
    msg << "beta*omega_c = " << beta * omega_c << " is not >> 1";
    out.push_back(msg.str());
  }
  return out;
}

double gamma(double omega, const BathParams& bath) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  if (omega == 0.0) return two_pi * bath.eta / bath.beta;
  const double x = std::abs(omega);
  // w / (1 - e^{-beta w}) for w > 0; for w < 0 the Boltzmann factor is folded into the exponent
  const double bose = x / (-std::expm1(-bath.beta * x));
  if (omega > 0.0) return two_pi * bath.eta * bose * std::exp(-x / bath.omega_c);
  return two_pi * bath.eta * bose * std::exp(-x / bath.omega_c - bath.beta * x);
}

// ---------------------------------------------------------------------------
// Lamb shift

namespace {

// 15-point Kronrod nodes/weights with the embedded 7-point Gauss rule.
constexpr std::array<double, 8> kXgk = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
constexpr std::array<double, 8> kWgk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr std::array<double, 4> kWg = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Segment {
  double a, b, value, error;
  bool operator<(const Segment& other) const { return error < other.error; }
};

template <class F>
Segment gauss_kronrod(const F& f, double a, double b) {
  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const double fc = f(center);
  double kronrod = fc * kWgk[7];
  double gauss = fc * kWg[3];
  for (int j = 0; j < 7; ++j) {
    const double dx = half * kXgk[j];
    const double f1 = f(center - dx);
    const double f2 = f(center + dx);
    kronrod += kWgk[j] * (f1 + f2);
    if (j % 2 == 1) gauss += kWg[j / 2] * (f1 + f2);
  }
  return {a, b, kronrod * half, std::abs((kronrod - gauss) * half)};
}

}  // namespace

QuadratureResult lamb_shift_quadrature(double omega, const BathParams& bath,
                                       const QuadratureConfig& cfg) {
  const double lambda = cfg.cutoff_multiple * bath.omega_c;
  // Symmetric pairing about the pole; the x -> 0 limit 2 gamma'(omega) is never sampled.
  auto integrand = [&](double x) { return (gamma(omega + x, bath) - gamma(omega - x, bath)) / x; };

  std::vector<double> cuts = {0.0, lambda};
  const double thermal = bath.temperature;
  for (double c : {std::abs(omega) - 10.0 * thermal, std::abs(omega), std::abs(omega) + 10.0 * thermal,
                   10.0 * thermal, bath.omega_c, 5.0 * bath.omega_c, 15.0 * bath.omega_c}) {
    if (c > 0.0 && c < lambda) cuts.push_back(c);
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  std::priority_queue<Segment> heap;
  double total = 0.0;
  double error = 0.0;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    auto seg = gauss_kronrod(integrand, cuts[k], cuts[k + 1]);
    total += seg.value;
    error += seg.error;
    heap.push(seg);
  }
  int intervals = static_cast<int>(heap.size());
  auto tolerance = [&] { return std::max(cfg.abs_tol, cfg.rel_tol * std::abs(total)); };
  while (error > tolerance() && intervals < cfg.max_intervals) {
    const Segment worst = heap.top();
    heap.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    const auto left = gauss_kronrod(integrand, worst.a, mid);
    const auto right = gauss_kronrod(integrand, mid, worst.b);
    total += left.value + right.value - worst.value;
    error += left.error + right.error - worst.error;
    heap.push(left);
    heap.push(right);
    ++intervals;
  }
  // re-sum to shed the drift of incremental updates
  total = 0.0;
  error = 0.0;
  while (!heap.empty()) {
    total += heap.top().value;
    error += heap.top().error;
    heap.pop();
  }
  if (error > std::max(cfg.abs_tol, cfg.rel_tol * std::abs(total))) {
    std::ostringstream msg;
    msg << "lamb_shift: quadrature did not converge at omega=" << omega << " (error " << error
        << " after " << intervals << " intervals)";
    throw QuadratureError(msg.str());
  }
  constexpr double two_pi = 2.0 * std::numbers::pi;
  return {-total / two_pi, error / two_pi, intervals};
}

double lamb_shift(double omega, const BathParams& bath, const QuadratureConfig& cfg) {
  return lamb_shift_quadrature(omega, bath, cfg).value;
}

LambShiftTable::LambShiftTable(const BathParams& bath, double half_width, double spacing,
                               const QuadratureConfig& cfg)
    : bath_(bath), cfg_(cfg), spacing_(spacing) {
  if (!(spacing > 0.0) || !(half_width > 0.0)) {
    throw std::invalid_argument("LambShiftTable: spacing and half width must be positive");
  }
  const auto half_nodes = static_cast<std::size_t>(std::ceil(half_width / spacing)) + 2;
  half_width_ = static_cast<double>(half_nodes) * spacing;
  values_.resize(2 * half_nodes + 1);
  for (std::size_t k = 0; k < values_.size(); ++k) {
    const double omega = (static_cast<double>(k) - static_cast<double>(half_nodes)) * spacing;
    values_[k] = bath.eta == 0.0 ? 0.0 : lamb_shift(omega, bath, cfg);
  }
}

double LambShiftTable::operator()(double omega) const {
  if (bath_.eta == 0.0) return 0.0;
  const double u = (omega + half_width_) / spacing_;
  const auto k = static_cast<long>(std::floor(u));
  if (values_.empty() || k < 1 || k + 2 >= static_cast<long>(values_.size())) {
    return lamb_shift(omega, bath_, cfg_);
  }
  const double t = u - static_cast<double>(k);
  const double y0 = values_[k - 1], y1 = values_[k], y2 = values_[k + 1], y3 = values_[k + 2];
  // Lagrange cubic through nodes -1, 0, 1, 2
  return y0 * (-t * (t - 1.0) * (t - 2.0) / 6.0) + y1 * ((t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0) +
         y2 * (-(t + 1.0) * t * (t - 2.0) / 2.0) + y3 * ((t + 1.0) * t * (t - 1.0) / 6.0);
}

// ---------------------------------------------------------------------------
// Validity conditions

bool ValidityReport::markovian_conditions_pass() const {
  for (const auto& c : conditions) {
    if (c.name != "adiabatic" && !c.pass) return false;
  }
  return true;
}

std::string ValidityReport::to_text() const {
  std::ostringstream out;
  out << "# total protocol time = " << total_time << " ns\n";
  out << "# tau_B = " << tau_b << " ns, tau_M = " << tau_m << " ns, g_eff = " << g_eff
      << " (g_eff = sqrt(eta*omega_c*gap))\n";
  out << "# name, lhs, rhs, margin, status\n";
  out << std::setprecision(6);
  for (const auto& c : conditions) {
    out << c.name << ", " << c.lhs << ", " << c.rhs << ", " << c.margin << ", "
        << (c.pass ? "PASS" : "FLAG");
    if (!c.note.empty()) out << "  # " << c.note;
    out << '\n';
  }
  return out.str();
}

ValidityReport check_validity(const BathParams& bath, double gap, double h, double tau,
                              double total_time) {
  if (!(gap > 0.0) || !(h > 0.0) || !(tau > 0.0)) {
    throw std::invalid_argument("check_validity: gap, h and tau must be positive");
  }
  ValidityReport report;
  report.tau_b = bath.beta / (2.0 * std::numbers::pi);
  report.tau_m = std::sqrt(2.0 * bath.beta / bath.omega_c);
  report.g_eff = std::sqrt(bath.eta * bath.omega_c * gap);
  const double tb = report.tau_b;
  const double g = report.g_eff;

  // each condition reads lhs < rhs
  auto add = [&](std::string name, double lhs, double rhs, std::string note = {}) {
    ValidityCondition c{std::move(name), lhs, rhs, lhs > 0.0 ? rhs / lhs : INFINITY, false,
                        std::move(note)};
    c.pass = c.margin > 1.0;
    report.conditions.push_back(std::move(c));
  };
  add("adiabatic", h / (gap * gap), tau, "tau >> h/gap^2; violated on purpose in the fast-anneal regime");
  add("dissipator_small", g * g * tb, gap, "g^2 tau_B << gap");
  add("markov", g * tb, 1.0, "g tau_B << 1");
  add("basis_change", h * tb * tb, tau, "tau >> h tau_B^2");
  add("ohmic_cutoff", 1.0, bath.beta * bath.omega_c, "beta omega_c >> 1");
  const double log_lhs = 1.0 / (bath.omega_c * std::log(bath.beta * bath.omega_c));
  const double log_rhs =
      std::min(2.0 * tb, tb * h / tau * (1.0 / (gap * gap) + tb * tb / tau));
  add("cutoff_log", log_lhs, log_rhs, "1/(omega_c log(beta omega_c)) < min{2 tau_B, ...}");
  report.total_time = total_time;
  return report;
}

}  // namespace qapause
