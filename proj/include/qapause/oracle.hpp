// oracle.hpp: reference calculations used to cross-check the trajectory engine:
// a dense density-matrix integrator of the adiabatic master equation, the
// two-level classical rate model around the avoided crossing, and the
// saturation-law fit of pause fidelities.

#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "qapause/bath.hpp"
#include "qapause/linalg.hpp"
#include "qapause/mcwf.hpp"
#include "qapause/spin_model.hpp"

namespace qapause {

struct LindbladConfig {
  double rtol{1e-9};
  double atol{1e-11};
  double initial_step{1e-3};  // ns
  double max_step{0.5};       // ns
  bool lamb_shift{true};
  double grouping_tol{1e-9};
  double positivity_tol{1e-8};
  int max_qubits{12};
  long max_steps{50'000'000};
};

struct DensityDiagnostics {
  double hermiticity{0.0};   // max |rho - rho^dag|
  double trace_error{0.0};   // |tr rho - 1|
  double min_eigenvalue{0.0};
  double purity{0.0};        // tr rho^2
};

DensityDiagnostics diagnose(const CMatrix& rho);

class PositivityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Adaptive Dormand-Prince 5(4) integration of
/// d rho/dt = -i[H_Q + H_LS, rho] + sum_alpha gamma(w_alpha) (L rho L^dag - {L^dag L, rho}/2),
/// with the generator rebuilt from the instantaneous eigenbasis at every stage.
class DenseLindblad {
 public:
  DenseLindblad(const AnnealModel& model, const BathParams& bath, Timeline timeline, LindbladConfig cfg = {},
                std::shared_ptr<const LambShiftTable> lamb = nullptr);

  CMatrix derivative(double t, const CMatrix& rho) const;
  /// Density matrices at the sorted `times`, starting from the ground state of H_Q at t = 0.
  /// Throws PositivityError when a sampled state has an eigenvalue below -positivity_tol.
  std::vector<CMatrix> integrate(const std::vector<double>& times) const;
  /// Evolves `rho` from t0 to t1 (within one timeline).
  CMatrix evolve(CMatrix rho, double t0, double t1) const;

  /// <eps_1(s)| rho |eps_1(s)> at the schedule point reached at time t.
  double ground_population(double t, const CMatrix& rho) const;
  long steps_taken() const { return steps_; }

 private:
  AnnealModel model_;
  BathParams bath_;
  Timeline timeline_;
  LindbladConfig cfg_;
  std::shared_ptr<const LambShiftTable> lamb_;
  mutable long steps_{0};
};

/// Constant-gap rate model between s_T and s_Delta:
/// (1/tau) d rho11/ds = gamma(D) (1 - rho11) - gamma(-D) rho11.
struct TwoLevelModel {
  double gap{0.0};
  double tau{0.0};
  double s_t{0.0};
  double s_delta{0.0};
  double rho11_t{1.0};
  double rate_down{0.0};  // Gamma_{2->1} = gamma(D)
  double rate_up{0.0};    // Gamma_{1->2} = gamma(-D)
  double s1{0.0};         // 1 / [tau gamma(D) (1 + e^{-beta D})]
  double c{0.0};          // rho11(s_T) - tau s1 gamma(D)

  double rho11(double s) const;
  /// Independent RK4 integration of the rate equation from s_T to s.
  double rho11_numeric(double s, int steps = 20000) const;
};

TwoLevelModel two_level_model(double gap, const BathParams& bath, double tau, double s_t, double s_delta,
                              double rho11_t = 1.0);

struct SaturationFit {
  double phi_sat{0.0};
  double alpha{0.0};
  double t_r{0.0};
  double l0{0.0};
  double err_phi_sat{0.0};
  double err_alpha{0.0};
  double err_t_r{0.0};
  double residual_norm{0.0};
  int iterations{0};

  double operator()(double l) const;
  std::string to_text() const;
};

class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FitPoint {
  double l;
  double phi;
};

/// Levenberg-Marquardt fit of phi(l) = phi_sat [1 - alpha exp(-(l - l0)/T_r)] with l0 fixed.
SaturationFit fit_saturation(const std::vector<FitPoint>& points, double l0, int max_iterations = 500);

}  // namespace qapause
