#include "qapause/oracle.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "qapause/spectral.hpp"

namespace qapause {

DensityDiagnostics diagnose(const CMatrix& rho) {
  DensityDiagnostics d;
  d.hermiticity = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
  d.trace_error = std::abs(rho.trace() - cplx(1.0, 0.0));
  const CMatrix herm = 0.5 * (rho + rho.adjoint());
  Eigen::SelfAdjointEigenSolver<CMatrix> solver(herm, Eigen::EigenvaluesOnly);
  d.min_eigenvalue = solver.eigenvalues().minCoeff();
  d.purity = (rho * rho).trace().real();
  return d;
}

// ---------------------------------------------------------------------------
// Dense Lindblad integrator

DenseLindblad::DenseLindblad(const AnnealModel& model, const BathParams& bath, Timeline timeline,
                             LindbladConfig cfg, std::shared_ptr<const LambShiftTable> lamb)
    : model_(model), bath_(bath), timeline_(std::move(timeline)), cfg_(cfg), lamb_(std::move(lamb)) {
  if (model_.sector().n > cfg_.max_qubits) {
    throw std::invalid_argument("DenseLindblad: n=" + std::to_string(model_.sector().n) +
                                " exceeds the oracle limit of " + std::to_string(cfg_.max_qubits) + " qubits");
  }
  if (timeline_.segments.empty()) throw std::invalid_argument("DenseLindblad: empty timeline");
  if (!lamb_) {
    lamb_ = (bath_.eta > 0.0 && cfg_.lamb_shift) ? make_lamb_table(model_, bath_)
                                                  : std::make_shared<const LambShiftTable>();
  }
}

CMatrix DenseLindblad::derivative(double t, const CMatrix& rho) const {
  const double s = timeline_.s_at(t);
  const auto eig = eigendecompose(model_.hamiltonian(s), nullptr, s);
  const CMatrix v = eig.vectors.cast<cplx>();
  const CMatrix r = v.transpose() * rho * v;
  const int d = eig.dim();

  CMatrix h = CMatrix::Zero(d, d);
  h.diagonal() = eig.energies.cast<cplx>();
  CMatrix out = CMatrix::Zero(d, d);
  if (bath_.eta > 0.0) {
    const auto table = build_jump_table(eig, model_.coupling(), cfg_.grouping_tol);
    RMatrix anti = RMatrix::Zero(d, d);  // sum gamma L^dag L
    for (const auto& ch : table.channels) {
      const double rate = gamma(ch.omega, bath_);
      const double shift = cfg_.lamb_shift ? (*lamb_)(ch.omega) : 0.0;
      for (const auto& x : ch.transitions) {
        for (const auto& y : ch.transitions) {
          const double aa = x.amplitude * y.amplitude;
          out(x.a, y.a) += rate * aa * r(x.b, y.b);
          if (x.a == y.a) {
            anti(x.b, y.b) += rate * aa;
            h(x.b, y.b) += shift * aa;
          }
        }
      }
    }
    out -= 0.5 * (anti.cast<cplx>() * r + r * anti.cast<cplx>());
  }
  out -= kI * (h * r - r * h);
  return v * out * v.transpose();
}

CMatrix DenseLindblad::evolve(CMatrix rho, double t0, double t1) const {
  // Dormand-Prince 5(4) tableau
  constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  constexpr double a21 = 1.0 / 5;
  constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                   a65 = -5103.0 / 18656;
  constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  constexpr double e1 = b1 - 5179.0 / 57600, e3 = b3 - 7571.0 / 16695, e4 = b4 - 393.0 / 640,
                   e5 = b5 + 92097.0 / 339200, e6 = b6 - 187.0 / 2100, e7 = -1.0 / 40;

  // split at segment boundaries so each RK step sees a smooth s(t)
  std::vector<double> cuts = {t0};
  for (const auto& seg : timeline_.segments) {
    if (seg.t1 > t0 && seg.t1 < t1) cuts.push_back(seg.t1);
  }
  cuts.push_back(t1);

  double h = cfg_.initial_step;
  for (std::size_t piece = 0; piece + 1 < cuts.size(); ++piece) {
    double t = cuts[piece];
    const double end = cuts[piece + 1];
    CMatrix k1 = derivative(t, rho);
    while (t < end) {
      const bool last = t + h >= end;
      const double step = last ? end - t : h;
      const CMatrix k2 = derivative(t + c2 * step, rho + step * a21 * k1);
      const CMatrix k3 = derivative(t + c3 * step, rho + step * (a31 * k1 + a32 * k2));
      const CMatrix k4 = derivative(t + c4 * step, rho + step * (a41 * k1 + a42 * k2 + a43 * k3));
      const CMatrix k5 = derivative(t + c5 * step, rho + step * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
      const double t_next = last ? end : t + step;
      const CMatrix k6 =
          derivative(t_next, rho + step * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
      const CMatrix next = rho + step * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
      const CMatrix k7 = derivative(t_next, next);
      const CMatrix err = step * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

      double sum = 0.0;
      for (Eigen::Index i = 0; i < rho.size(); ++i) {
        const double scale = cfg_.atol + cfg_.rtol * std::max(std::abs(rho(i)), std::abs(next(i)));
        sum += std::norm(err(i)) / (scale * scale);
      }
      const double norm = std::sqrt(sum / static_cast<double>(rho.size()));
      if (++steps_ > cfg_.max_steps) throw std::runtime_error("DenseLindblad: step budget exhausted");
      const double factor = norm == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(norm, -0.2), 0.2, 5.0);
      if (norm <= 1.0) {
        t = t_next;
        rho = next;
        k1 = k7;
        if (!last) h = std::min(step * factor, cfg_.max_step);
      } else {
        h = step * factor;
        if (h < 1e-14) throw std::runtime_error("DenseLindblad: step size underflow");
      }
    }
  }
  return rho;
}

std::vector<CMatrix> DenseLindblad::integrate(const std::vector<double>& times) const {
  if (!std::is_sorted(times.begin(), times.end()) || (!times.empty() && times.front() < 0.0)) {
    throw std::invalid_argument("DenseLindblad: output times must be sorted and non-negative");
  }
  const RVector g = eigendecompose(model_.hamiltonian(timeline_.s_at(0.0))).vectors.col(0);
  CMatrix rho = (g * g.transpose()).cast<cplx>();
  double t = 0.0;
  std::vector<CMatrix> out;
  for (double target : times) {
    if (target > t) rho = evolve(std::move(rho), t, target);
    t = target;
    const auto diag = diagnose(rho);
    if (diag.min_eigenvalue < -cfg_.positivity_tol) {
      std::ostringstream msg;
      msg << "DenseLindblad: density matrix eigenvalue " << diag.min_eigenvalue << " at t=" << t;
      throw PositivityError(msg.str());
    }
    out.push_back(rho);
  }
  return out;
}

double DenseLindblad::ground_population(double t, const CMatrix& rho) const {
  const RVector g = eigendecompose(model_.hamiltonian(timeline_.s_at(t))).vectors.col(0);
  const CVector gc = g.cast<cplx>();
  return (gc.adjoint() * rho * gc)(0).real();
}

// ---------------------------------------------------------------------------
// Two-level model

TwoLevelModel two_level_model(double gap, const BathParams& bath, double tau, double s_t, double s_delta,
                              double rho11_t) {
  if (!(gap > 0.0) || !(tau > 0.0)) throw std::invalid_argument("two_level_model: gap and tau must be positive");
  TwoLevelModel m;
  m.gap = gap;
  m.tau = tau;
  m.s_t = s_t;
  m.s_delta = s_delta;
  m.rho11_t = rho11_t;
  m.rate_down = gamma(gap, bath);
  m.rate_up = gamma(-gap, bath);
  if (m.rate_down > 0.0) {
    m.s1 = 1.0 / (tau * m.rate_down * (1.0 + std::exp(-bath.beta * gap)));
    m.c = rho11_t - tau * m.s1 * m.rate_down;
  }
  return m;
}

double TwoLevelModel::rho11(double s) const {
  if (s1 == 0.0) return rho11_t;
  return rho11_t - c * (1.0 - std::exp(-(s - s_t) / s1));
}

double TwoLevelModel::rho11_numeric(double s, int steps) const {
  auto f = [&](double p) { return tau * (rate_down * (1.0 - p) - rate_up * p); };
  const double h = (s - s_t) / steps;
  double p = rho11_t;
  for (int k = 0; k < steps; ++k) {
    const double k1 = f(p);
    const double k2 = f(p + 0.5 * h * k1);
    const double k3 = f(p + 0.5 * h * k2);
    const double k4 = f(p + h * k3);
    p += h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
  }
  return p;
}

// ---------------------------------------------------------------------------
// Saturation fit

double SaturationFit::operator()(double l) const { return phi_sat * (1.0 - alpha * std::exp(-(l - l0) / t_r)); }

std::string SaturationFit::to_text() const {
  std::ostringstream out;
  out << std::setprecision(8);
  out << "model: phi(l) = phi_sat * (1 - alpha * exp(-(l - l0) / T_r))\n";
  out << "l0 = " << l0 << " ns (fixed)\n";
  out << "phi_sat = " << phi_sat << " +- " << err_phi_sat << "\n";
  out << "alpha = " << alpha << " +- " << err_alpha << "\n";
  out << "T_r = " << t_r << " +- " << err_t_r << " ns\n";
  out << "residual_norm = " << residual_norm << "\n";
  out << "iterations = " << iterations << "\n";
  return out.str();
}

SaturationFit fit_saturation(const std::vector<FitPoint>& points, double l0, int max_iterations) {
  if (points.size() < 4) throw std::invalid_argument("fit_saturation: need at least four points");
  for (const auto& p : points) {
    if (p.l < l0) throw std::invalid_argument("fit_saturation: pause lengths must be >= l0");
  }
  std::vector<FitPoint> data = points;
  std::sort(data.begin(), data.end(), [](const FitPoint& a, const FitPoint& b) { return a.l < b.l; });
  const auto n = static_cast<Eigen::Index>(data.size());

  // initial guess: phi_sat from the maximum, T_r from a log-linear fit, alpha from the first point
  double phi_max = 0.0;
  for (const auto& p : data) phi_max = std::max(phi_max, p.phi);
  const double sat0 = phi_max * (1.0 + 1e-3);
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int used = 0;
  for (const auto& p : data) {
    const double gap = 1.0 - p.phi / sat0;
    if (gap <= 0.0) continue;
    const double x = p.l - l0, y = std::log(gap);
    sx += x, sy += y, sxx += x * x, sxy += x * y, ++used;
  }
  const double denom = used * sxx - sx * sx;
  const double slope = (used >= 2 && denom > 0.0) ? (used * sxy - sx * sy) / denom : 0.0;
  double t_r = slope < 0.0 ? -1.0 / slope : std::max(1.0, (data.back().l - data.front().l) / 3.0);
  double alpha = (1.0 - data.front().phi / sat0) * std::exp((data.front().l - l0) / t_r);
  if (!(alpha > 0.0) || !std::isfinite(alpha)) alpha = 0.1;

  Eigen::Vector3d p(sat0, alpha, t_r);
  auto residuals = [&](const Eigen::Vector3d& q, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
    r.resize(n);
    if (jac) jac->resize(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double x = data[static_cast<std::size_t>(i)].l - l0;
      const double e = std::exp(-x / q(2));
      r(i) = q(0) * (1.0 - q(1) * e) - data[static_cast<std::size_t>(i)].phi;
      if (jac) {
        (*jac)(i, 0) = 1.0 - q(1) * e;
        (*jac)(i, 1) = -q(0) * e;
        (*jac)(i, 2) = -q(0) * q(1) * e * x / (q(2) * q(2));
      }
    }
  };

  Eigen::VectorXd r;
  Eigen::MatrixXd jac;
  residuals(p, r, &jac);
  double cost = r.squaredNorm();
  double lambda = 1e-3;
  bool converged = false;
  int it = 0;
  for (; it < max_iterations && !converged; ++it) {
    const Eigen::Matrix3d jtj = jac.transpose() * jac;
    const Eigen::Vector3d grad = jac.transpose() * r;
    if (grad.cwiseAbs().maxCoeff() < 1e-30 || cost < 1e-32) {
      converged = true;
      break;
    }
    bool accepted = false;
    while (!accepted && lambda < 1e20) {
      Eigen::Matrix3d a = jtj;
      a.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-300);
      const Eigen::Vector3d delta = a.ldlt().solve(-grad);
      const Eigen::Vector3d trial = p + delta;
      if (!(trial(2) > 0.0) || !trial.allFinite()) {
        lambda *= 10.0;
        continue;
      }
      Eigen::VectorXd r_trial;
      residuals(trial, r_trial, nullptr);
      const double trial_cost = r_trial.squaredNorm();
      if (trial_cost <= cost) {
        accepted = true;
        const double rel_step = delta.cwiseAbs().cwiseQuotient(p.cwiseAbs().cwiseMax(1e-300)).maxCoeff();
        const double improvement = cost - trial_cost;
        p = trial;
        residuals(p, r, &jac);
        cost = trial_cost;
        lambda = std::max(lambda / 10.0, 1e-15);
        if (rel_step < 1e-13 || improvement <= 1e-15 * cost) converged = true;
      } else {
        lambda *= 10.0;
      }
    }
    if (!accepted) converged = true;  // no descent direction left: at a minimum to working precision
  }
  if (!converged) throw FitError("fit_saturation: no convergence after " + std::to_string(max_iterations) + " iterations");

  SaturationFit fit;
  fit.phi_sat = p(0);
  fit.alpha = p(1);
  fit.t_r = p(2);
  fit.l0 = l0;
  fit.residual_norm = std::sqrt(cost);
  fit.iterations = it;
  if (n > 3) {
    const Eigen::Matrix3d cov = (jac.transpose() * jac).inverse() * (cost / static_cast<double>(n - 3));
    fit.err_phi_sat = std::sqrt(std::max(0.0, cov(0, 0)));
    fit.err_alpha = std::sqrt(std::max(0.0, cov(1, 1)));
    fit.err_t_r = std::sqrt(std::max(0.0, cov(2, 2)));
  }
  return fit;
}

}  // namespace qapause
