#include "qapause/spectral.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace qapause {

EigenSystem eigendecompose(const RMatrix& h, const EigenSystem* previous, double s) {
  if (h.rows() != h.cols()) throw std::invalid_argument("eigendecompose: matrix is not square");
  if (!h.allFinite()) throw std::runtime_error("eigendecompose: non-finite matrix entries");
  Eigen::SelfAdjointEigenSolver<RMatrix> solver(h);
  if (solver.info() != Eigen::Success) throw std::runtime_error("eigendecompose: solver failed");

  EigenSystem out;
  out.s = s;
  out.energies = solver.eigenvalues();
  out.vectors = solver.eigenvectors();
  const bool track = previous != nullptr && previous->dim() == out.dim();
  for (int k = 0; k < out.dim(); ++k) {
    auto v = out.vectors.col(k);
    double sign = 1.0;
    if (track) {
      sign = previous->vectors.col(k).dot(v) < 0.0 ? -1.0 : 1.0;
    } else {
      Eigen::Index arg = 0;
      v.cwiseAbs().maxCoeff(&arg);
      sign = v(arg) < 0.0 ? -1.0 : 1.0;
    }
    v *= sign;
  }
  return out;
}

double lowest_gap(const AnnealModel& model, double s) {
  Eigen::SelfAdjointEigenSolver<RMatrix> solver(model.hamiltonian(s), Eigen::EigenvaluesOnly);
  const auto& e = solver.eigenvalues();
  return e(1) - e(0);
}

GapMinimum locate_min_gap(const AnnealModel& model, double s_lo, double s_hi, double tol,
                          double scan_step) {
  if (!(tol > 0.0) || !(scan_step > 0.0) || !(s_hi > s_lo)) {
    throw std::invalid_argument("locate_min_gap: need tol > 0, scan_step > 0 and s_lo < s_hi");
  }
  const int points = static_cast<int>(std::ceil((s_hi - s_lo) / scan_step)) + 1;
  std::vector<double> s(points), g(points);
  for (int k = 0; k < points; ++k) {
    s[k] = k + 1 == points ? s_hi : s_lo + k * scan_step;
    g[k] = lowest_gap(model, s[k]);
  }

  std::vector<GapMinimum> minima;
  for (int k = 1; k + 1 < points; ++k) {
    if (g[k] < g[k - 1] && g[k] <= g[k + 1]) minima.push_back({s[k], g[k]});
  }
  const auto global = std::distance(g.begin(), std::min_element(g.begin(), g.end()));
  if (global == 0 || global == points - 1) {
    minima.push_back({s[global], g[global]});
    std::ostringstream msg;
    msg << "locate_min_gap: minimum gap " << g[global] << " lies on the boundary s=" << s[global];
    throw GapSearchError(msg.str(), minima);
  }
  if (minima.size() > 1) {
    std::ostringstream msg;
    msg << "locate_min_gap: gap is not unimodal; local minima at";
    for (const auto& m : minima) msg << " s=" << m.s << " (gap " << m.gap << ")";
    throw GapSearchError(msg.str(), minima);
  }

  // golden-section search on the bracket around the scan minimum
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = s[global - 1];
  double b = s[global + 1];
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double gc = lowest_gap(model, c);
  double gd = lowest_gap(model, d);
  while (b - a > tol) {
    if (gc < gd) {
      b = d;
      d = c;
      gd = gc;
      c = b - inv_phi * (b - a);
      gc = lowest_gap(model, c);
    } else {
      a = c;
      c = d;
      gc = gd;
      d = a + inv_phi * (b - a);
      gd = lowest_gap(model, d);
    }
  }
  const double s_min = 0.5 * (a + b);
  return {s_min, lowest_gap(model, s_min)};
}

std::optional<double> gap_crossing_before(const AnnealModel& model, double level, double s_max,
                                          double s_min) {
  double hi = s_max;
  if (lowest_gap(model, hi) >= level) return hi;
  constexpr double step = 1e-3;
  double lo = hi;
  while (true) {
    lo = std::max(s_min, lo - step);
    if (lowest_gap(model, lo) >= level) break;
    if (lo <= s_min) return std::nullopt;
    hi = lo;
  }
  for (int it = 0; it < 100 && hi - lo > 1e-13; ++it) {
    const double mid = 0.5 * (lo + hi);
    (lowest_gap(model, mid) >= level ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

RMatrix JumpTable::channel_matrix(std::size_t alpha) const {
  RMatrix out = RMatrix::Zero(dim(), dim());
  for (const auto& t : channels.at(alpha).transitions) out(t.a, t.b) = t.amplitude;
  return out;
}

JumpTable build_jump_table(const EigenSystem& eig, const RVector& coupling_diagonal, double rel_tol) {
  const int d = eig.dim();
  if (coupling_diagonal.size() != d) throw std::invalid_argument("build_jump_table: dimension mismatch");
  JumpTable table;
  table.amplitudes = eig.vectors.transpose() * coupling_diagonal.asDiagonal() * eig.vectors;
  table.amplitudes = 0.5 * (table.amplitudes + table.amplitudes.transpose()).eval();
  table.channel_of.assign(static_cast<std::size_t>(d) * d, 0);

  const double width = d > 1 ? eig.energies(d - 1) - eig.energies(0) : 0.0;
  const double tol = rel_tol * std::max(width, 1.0);

  JumpChannel dephasing;
  for (int a = 0; a < d; ++a) dephasing.transitions.push_back({a, a, table.amplitudes(a, a)});
  table.channels.push_back(std::move(dephasing));

  struct Pair {
    double omega;
    int a, b;
  };
  std::vector<Pair> pairs;
  pairs.reserve(static_cast<std::size_t>(d) * (d - 1));
  for (int a = 0; a < d; ++a) {
    for (int b = 0; b < d; ++b) {
      if (a != b) pairs.push_back({eig.energies(b) - eig.energies(a), a, b});
    }
  }
  std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& x, const Pair& y) { return x.omega < y.omega; });

  std::size_t k = 0;
  while (k < pairs.size()) {
    std::size_t end = k + 1;
    while (end < pairs.size() && pairs[end].omega - pairs[end - 1].omega <= tol) ++end;
    double mean = 0.0;
    for (std::size_t j = k; j < end; ++j) mean += pairs[j].omega;
    mean /= static_cast<double>(end - k);
    // degenerate pairs share the zero frequency with the dephasing channel
    const bool zero = std::abs(mean) <= tol;
    const int index = zero ? 0 : static_cast<int>(table.channels.size());
    if (!zero) table.channels.push_back(JumpChannel{mean, {}});
    for (std::size_t j = k; j < end; ++j) {
      const auto& p = pairs[j];
      table.channels[index].transitions.push_back({p.a, p.b, table.amplitudes(p.a, p.b)});
      table.channel_of[static_cast<std::size_t>(p.a * d + p.b)] = index;
    }
    k = end;
  }
  return table;
}

double adiabatic_h(const AnnealModel& model, int grid_points) {
  if (grid_points < 2) throw std::invalid_argument("adiabatic_h: need at least two grid points");
  double h = 0.0;
  for (int k = 0; k < grid_points; ++k) {
    const double s = static_cast<double>(k) / (grid_points - 1);
    const auto eig = eigendecompose(model.hamiltonian(s), nullptr, s);
    const RMatrix dh = eig.vectors.transpose() * model.hamiltonian_derivative(s) * eig.vectors;
    h = std::max(h, dh.cwiseAbs().maxCoeff());
  }
  return h;
}

SpectralGrid::SpectralGrid(const AnnealModel& model, int points) {
  if (points < 2) throw std::invalid_argument("SpectralGrid: need at least two points");
  spacing_ = 1.0 / (points - 1);
  systems_.reserve(static_cast<std::size_t>(points));
  for (int k = 0; k < points; ++k) {
    const double s = k + 1 == points ? 1.0 : k * spacing_;
    const EigenSystem* prev = systems_.empty() ? nullptr : &systems_.back();
    systems_.push_back(eigendecompose(model.hamiltonian(s), prev, s));
  }
}

const EigenSystem& SpectralGrid::nearest(double s) const {
  const auto k = static_cast<long>(std::lround(std::clamp(s, 0.0, 1.0) / spacing_));
  return systems_[static_cast<std::size_t>(std::clamp(k, 0L, static_cast<long>(systems_.size()) - 1))];
}

}  // namespace qapause
