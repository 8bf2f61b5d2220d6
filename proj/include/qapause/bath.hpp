// bath.hpp: Ohmic bath: transition-rate function, Lamb-shift transform and
// validity conditions of the weak-coupling master equation.

#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace qapause {

/// Boltzmann constant over hbar, in rad/(s K).
inline constexpr double kBoltzmannOverHbar = 1.380649e-23 / 1.054571817e-34;

/// Temperature in kelvin to an energy in angular GHz (1e9 rad/s).
inline double kelvin_to_angular_ghz(double kelvin) { return kBoltzmannOverHbar * kelvin * 1e-9; }

struct BathParams {
  double eta{0.0};          // dimensionless coupling
  double temperature{1.0};  // angular GHz
  double beta{1.0};         // ns, = 1 / temperature
  double omega_c{1000.0};   // cutoff, angular GHz

  /// Throws std::invalid_argument for negative eta or non-positive T, omega_c.
  static BathParams make(double eta, double temperature, double omega_c);
  /// Non-fatal diagnostics (beta * omega_c below 10).
  std::vector<std::string> warnings() const;
};

/// gamma(w) = 2 pi eta w exp(-|w|/wc) / (1 - exp(-beta w)); gamma(0) = 2 pi eta / beta.
double gamma(double omega, const BathParams& bath);

struct QuadratureConfig {
  double cutoff_multiple{40.0};  // integrate to Lambda = cutoff_multiple * omega_c
  double rel_tol{1e-11};
  double abs_tol{1e-14};
  int max_intervals{2000};
};

struct QuadratureResult {
  double value{0.0};
  double error{0.0};
  int intervals{0};
};

class QuadratureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Principal value S(w) = P int dw'/2pi gamma(w')/(w - w'), folded about the pole
/// into -1/(2 pi) int_0^Lambda [gamma(w + x) - gamma(w - x)] / x dx and integrated
/// by adaptive 15-point Gauss-Kronrod. Throws QuadratureError if the estimated
/// error stays above tolerance.
QuadratureResult lamb_shift_quadrature(double omega, const BathParams& bath,
                                       const QuadratureConfig& cfg = {});
double lamb_shift(double omega, const BathParams& bath, const QuadratureConfig& cfg = {});

/// S(w) tabulated on a uniform grid over [-half_width, half_width] and read back
/// with four-point cubic interpolation. Frequencies outside the table fall back to
/// direct quadrature.
class LambShiftTable {
 public:
  LambShiftTable() = default;
  LambShiftTable(const BathParams& bath, double half_width, double spacing = 0.05,
                 const QuadratureConfig& cfg = {});

  double operator()(double omega) const;
  double half_width() const { return half_width_; }
  double spacing() const { return spacing_; }
  bool empty() const { return values_.empty(); }

 private:
  BathParams bath_;
  QuadratureConfig cfg_;
  double half_width_{0.0};
  double spacing_{0.0};
  std::vector<double> values_;
};

struct ValidityCondition {
  std::string name;
  double lhs{0.0};
  double rhs{0.0};
  double margin{0.0};  // rhs / lhs; the condition holds when margin > 1
  bool pass{false};
  std::string note;
};

struct ValidityReport {
  double tau_b{0.0};
  double tau_m{0.0};
  double g_eff{0.0};
  double total_time{0.0};
  std::vector<ValidityCondition> conditions;

  /// True when every condition except the adiabatic one passes.
  bool markovian_conditions_pass() const;
  std::string to_text() const;
};

/// gap and h in angular GHz, tau and total_time in ns. The microscopic coupling g is
/// not fixed by eta alone; the report uses g_eff = sqrt(eta * omega_c * gap).
ValidityReport check_validity(const BathParams& bath, double gap, double h, double tau,
                              double total_time);

}  // namespace qapause
