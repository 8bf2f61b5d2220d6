// mcwf.hpp: Monte Carlo wave-function unraveling of the adiabatic master
// equation: non-Hermitian propagation, waiting-time jump detection, jump
// selection and trajectory averaging.
//
// Within one step the state is held in the eigenbasis of H_Q at the step
// midpoint. When no two levels are degenerate, H_eff is diagonal there and
// both the propagator and the norm decay are closed-form; otherwise the dense
// generator is exponentiated.

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "qapause/bath.hpp"
#include "qapause/linalg.hpp"
#include "qapause/spectral.hpp"
#include "qapause/spin_model.hpp"

namespace qapause {

/// One piece of the s(t) protocol: linear in t from (t0, s0) to (t1, s1).
struct Segment {
  double t0{0.0};
  double t1{0.0};
  double s0{0.0};
  double s1{0.0};

  bool hold() const { return s0 == s1; }
  double s_at(double t) const;
};

struct Timeline {
  std::vector<Segment> segments;

  double end_time() const { return segments.empty() ? 0.0 : segments.back().t1; }
  /// Throws std::out_of_range outside [0, end_time()].
  double s_at(double t) const;
};

struct EngineConfig {
  double dt{1e-2};            // ns
  bool lamb_shift{true};
  double bisection_tol{1e-10};
  double grouping_tol{1e-9};
  int workers{1};
  int chunk{0};               // trajectories advanced together by one worker; 0 = split evenly
  bool keep_jump_logs{false};
};

/// Everything the propagation needs at a fixed schedule point s.
struct StepTable {
  double s{0.0};
  EigenSystem eig;
  JumpTable jumps;
  std::vector<double> rates;   // gamma(omega_alpha) per channel
  std::vector<double> shifts;  // S(omega_alpha) per channel, zero when the Lamb shift is off
  bool normal{true};
  CVector lambda;     // normal case: eigenvalues E_b + delta_b - i Gamma_b / 2 of H_eff
  RVector decay;      // normal case: Gamma_b
  CMatrix generator;  // general case: H_eff in the eigenbasis

  int dim() const { return eig.dim(); }
  /// exp(-i H_eff t) c, with c in eigenbasis coordinates.
  CVector propagate(const CVector& c, double t) const;
  /// ||exp(-i H_eff t) c||^2.
  double norm_after(const CVector& c, double t) const;
  /// H_eff in the computational basis.
  CMatrix effective_hamiltonian() const;
  /// Pi_alpha = gamma_alpha ||L_alpha c||^2 for every channel.
  std::vector<double> jump_weights(const CVector& c) const;
};

StepTable build_step_table(const AnnealModel& model, const BathParams& bath, const LambShiftTable& lamb,
                           double s, const EngineConfig& cfg = {});

/// Waiting-time search over [0, duration]: nullopt when ||c(t)||^2 stays above r,
/// otherwise the bisected crossing time with | ||c(t*)||^2 - r | < tol.
std::optional<double> find_jump_time(const StepTable& table, const CVector& c, double duration, double r,
                                     double tol = 1e-10);

/// Smallest alpha whose cumulative normalized weight reaches mu. Throws if all weights vanish.
std::size_t select_jump(const std::vector<double>& weights, double mu);

/// C_alpha c / ||C_alpha c||. Throws if the result has zero norm.
CVector apply_jump(const StepTable& table, const CVector& c, std::size_t alpha);

struct JumpEvent {
  double t;
  std::size_t alpha;
  double omega;
};

struct TrajectoryRecord {
  std::vector<double> rho11;         // ground-state probability at each sample time
  std::vector<double> final_eigen;   // eigenstate populations at the end
  std::vector<double> final_weight;  // Hamming-weight populations at the end
  std::uint64_t jumps{0};
  std::vector<JumpEvent> log;
  CVector final_state;               // normalized, computational basis
};

struct Estimate {
  double mean{0.0};
  double error{0.0};  // sigma_MC
};

/// sigma^2 = sum (x - mean)^2 / (M (M - 1)); requires M >= 2 for a nonzero error.
Estimate estimate(const std::vector<double>& values);

struct RunResult {
  std::vector<double> times;
  std::vector<double> s;
  std::vector<Estimate> rho11;
  std::vector<Estimate> final_eigen;
  std::vector<Estimate> final_weight;
  Estimate fidelity;
  std::size_t trajectories{0};
  double mean_jumps{0.0};
  std::uint64_t max_jumps{0};
  std::vector<TrajectoryRecord> records;
};

/// Averages records in index order; throws std::invalid_argument on shape mismatch.
RunResult average(std::vector<TrajectoryRecord> records, const std::vector<double>& times,
                  const std::vector<double>& s, bool keep_records = false);

class McwfEngine {
 public:
  /// `sample_times` are sorted, lie in [0, end] and always include both endpoints.
  /// A shared Lamb-shift table may be supplied; otherwise one is built to cover the spectrum.
  McwfEngine(const AnnealModel& model, const BathParams& bath, Timeline timeline, std::vector<double> sample_times,
             EngineConfig cfg = {}, std::shared_ptr<const LambShiftTable> lamb = nullptr);

  TrajectoryRecord run_trajectory(std::uint64_t seed, std::uint64_t index) const;
  /// Runs trajectories [0, count) across cfg.workers threads. Results do not depend
  /// on the worker count. `progress` receives the number of finished trajectories.
  RunResult run(std::uint64_t seed, std::size_t count, bool keep_records = false,
                const std::function<void(std::size_t)>& progress = {}) const;

  const std::vector<double>& sample_times() const { return samples_; }
  std::vector<double> sample_s() const;
  const Timeline& timeline() const { return timeline_; }
  const EngineConfig& config() const { return cfg_; }
  std::shared_ptr<const LambShiftTable> lamb_table() const { return lamb_; }
  std::size_t step_count() const { return steps_.size(); }

 private:
  struct Step {
    double t0, t1, s;
    int table;   // index into hold tables, or -1 for a fresh midpoint table
    int sample;  // sample index reached at t1, or -1
  };

  void run_chunk(std::uint64_t seed, std::uint64_t first, std::size_t count, TrajectoryRecord* out) const;

  AnnealModel model_;
  BathParams bath_;
  Timeline timeline_;
  std::vector<double> samples_;
  EngineConfig cfg_;
  std::shared_ptr<const LambShiftTable> lamb_;
  std::vector<Step> steps_;
  std::vector<StepTable> hold_tables_;
  std::vector<RVector> sample_ground_;  // ground eigenvector at each sample time
  EigenSystem final_eig_;
  RVector initial_ground_;
};

/// Lamb-shift table covering every Bohr frequency of the model's spectrum.
std::shared_ptr<const LambShiftTable> make_lamb_table(const AnnealModel& model, const BathParams& bath);

}  // namespace qapause
