// spin_model.hpp: collective-spin Hamiltonians and annealing schedules in the
// maximum-total-spin (Dicke) sector.
//
// Basis: |w>, w = 0..n, the Hamming weight (number of down spins). The state
// |w> has total magnetization sum_i sigma^z_i = n - 2w. Energies are in units
// of 1e9 rad/s ("angular GHz"); time is in ns, so phase = energy * time.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "qapause/linalg.hpp"

namespace qapause {

inline constexpr int kMaxQubits = 64;

struct SpinSector {
  int n{0};
  RVector sz;      // diagonal of S_z, entries (n - 2w)/2
  RVector sx_off;  // <w|S_x|w+1>, w = 0..n-1

  int dim() const { return n + 1; }
  double spin() const { return 0.5 * n; }

  RMatrix sz_matrix() const;
  RMatrix sx_matrix() const;
  /// Imaginary part of S_y (S_y is purely imaginary in this basis).
  RMatrix sy_imag_matrix() const;
  /// Diagonal of the bath coupling operator sum_i sigma^z_i = 2 S_z.
  RVector coupling_diagonal() const { return 2.0 * sz; }
};

SpinSector build_sector(int n);

/// -(n/2) (1 - 2w/n)^p, the p-spin energy of |w>.
double pspin_energy(int n, int p, int w);

enum class ProblemKind { PSpin, Search };

std::string to_string(ProblemKind kind);
ProblemKind parse_problem_kind(const std::string& text);

struct ProblemHamiltonian {
  ProblemKind kind{ProblemKind::PSpin};
  int n{0};
  int p{0};  // 0 for search
  RVector diagonal;
};

ProblemHamiltonian build_problem(ProblemKind kind, int n, std::optional<int> p = std::nullopt);

struct ScheduleSample {
  double s;
  double a;
  double b;
};

class ScheduleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tabulated A(s), B(s) with a monotone piecewise-cubic (PCHIP) interpolant.
class AnnealSchedule {
 public:
  AnnealSchedule() = default;

  /// Validates ordering, monotonicity and endpoint ratios; throws ScheduleError.
  static AnnealSchedule from_samples(std::vector<ScheduleSample> samples, std::string label = {});
  static AnnealSchedule load(const std::filesystem::path& path);
  /// A(s) = 1 - s, B(s) = s on a handful of nodes.
  static AnnealSchedule linear(int nodes = 11);

  double a(double s) const { return eval(s, a_, da_); }
  double b(double s) const { return eval(s, b_, db_); }
  double da(double s) const { return eval_derivative(s, a_, da_); }
  double db(double s) const { return eval_derivative(s, b_, db_); }

  const std::vector<ScheduleSample>& samples() const { return samples_; }
  const std::string& label() const { return label_; }
  /// FNV-1a hash of the source bytes (or of the sample values for in-memory schedules).
  std::uint64_t content_hash() const { return hash_; }

 private:
  double eval(double s, const std::vector<double>& y, const std::vector<double>& m) const;
  double eval_derivative(double s, const std::vector<double>& y, const std::vector<double>& m) const;
  std::size_t interval(double s) const;

  std::vector<ScheduleSample> samples_;
  std::vector<double> s_, a_, b_, da_, db_;
  std::string label_;
  std::uint64_t hash_{0};
};

/// Immutable bundle of sector, problem and schedule; assembles H_Q(s) and its s-derivative.
class AnnealModel {
 public:
  AnnealModel(SpinSector sector, ProblemHamiltonian problem, AnnealSchedule schedule);

  const SpinSector& sector() const { return sector_; }
  const ProblemHamiltonian& problem() const { return problem_; }
  const AnnealSchedule& schedule() const { return schedule_; }
  int dim() const { return sector_.dim(); }

  /// H_Q(s) = A(s) (-S_x) + B(s) H_problem. Throws std::out_of_range for s outside [0, 1].
  RMatrix hamiltonian(double s) const;
  RMatrix hamiltonian_derivative(double s) const;
  const RVector& coupling() const { return coupling_; }

 private:
  SpinSector sector_;
  ProblemHamiltonian problem_;
  AnnealSchedule schedule_;
  RMatrix neg_sx_;
  RVector coupling_;
};

RMatrix assemble_hq(const SpinSector& sector, const ProblemHamiltonian& problem,
                    const AnnealSchedule& schedule, double s);

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace qapause
