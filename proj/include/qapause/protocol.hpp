// protocol.hpp: anneal-with-pause protocol, experiment configuration, and the
// runners behind the command-line tool (anneal, sweep, spectrum, validation).

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "qapause/bath.hpp"
#include "qapause/mcwf.hpp"
#include "qapause/spectral.hpp"
#include "qapause/spin_model.hpp"

namespace qapause {

/// s(t) ramps at rate 1/tau, holds at s_p for l_p, then ramps to 1.
struct PauseProtocol {
  double tau{100.0};
  std::optional<double> s_p;
  double l_p{0.0};

  double total_time() const { return tau + (s_p ? l_p : 0.0); }
  double pause_start() const { return s_p ? *s_p * tau : tau; }
  void validate() const;
  Timeline timeline() const;
};

/// Throws std::out_of_range for t outside [0, total_time].
double pause_map(double t, const PauseProtocol& protocol);

/// Uniform s points on the ramps plus uniform points inside the hold; sorted wall times.
std::vector<double> output_times(const PauseProtocol& protocol, int s_points, int pause_points);

// ---------------------------------------------------------------------------
// Configuration

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Minimal TOML-style document: [section] headers, key = value lines, '#' comments.
/// Values are numbers, booleans, quoted strings or flat arrays of numbers.
class KeyValueDocument {
 public:
  using Value = std::variant<double, bool, std::string, std::vector<double>>;

  static KeyValueDocument parse(const std::string& text);

  bool has(const std::string& section, const std::string& key) const;
  double number(const std::string& section, const std::string& key) const;
  bool boolean(const std::string& section, const std::string& key) const;
  std::string string(const std::string& section, const std::string& key) const;
  std::vector<double> array(const std::string& section, const std::string& key) const;
  /// Throws ConfigError naming the first key that was never read.
  void reject_unused() const;

 private:
  const Value& get(const std::string& section, const std::string& key) const;
  std::map<std::string, std::map<std::string, Value>> values_;
  std::map<std::string, int> lines_;
  mutable std::map<std::string, bool> used_;
};

struct SweepGrid {
  std::vector<double> s_p;
  std::vector<double> l_p;
  void validate() const;
};

struct ExperimentConfig {
  ProblemKind problem{ProblemKind::PSpin};
  int n{20};
  std::optional<int> p{19};
  std::filesystem::path schedule;  // empty: linear schedule

  double eta{1e-3};
  double temperature{1.57};
  double omega_c{1000.0};

  PauseProtocol protocol;
  std::size_t trajectories{5000};
  std::uint64_t seed{1};
  EngineConfig engine;
  bool converge_dt{false};
  int output_points{501};
  int pause_points{51};

  int spectrum_levels{6};
  int spectrum_points{1001};
  int histogram_levels{6};
  int oracle_checkpoints{20};

  SweepGrid sweep;
  std::filesystem::path out_dir{"out"};

  /// Parses `text`; relative paths resolve against `base_dir`. Throws ConfigError.
  static ExperimentConfig parse(const std::string& text, const std::filesystem::path& base_dir = {});
  static ExperimentConfig load(const std::filesystem::path& path);

  BathParams bath() const { return BathParams::make(eta, temperature, omega_c); }
  AnnealModel model() const;
  /// Stable text form of every setting that affects results.
  std::string canonical() const;
  std::uint64_t hash() const;
};

std::string hex64(std::uint64_t v);

// ---------------------------------------------------------------------------
// Runners

struct AnnealOutcome {
  RunResult result;
  double dt{0.0};
  double wall_seconds{0.0};
};

using ProgressFn = std::function<void(const std::string&)>;

/// Runs the configured anneal and writes rho11.csv, populations.csv,
/// eigen_populations.csv and summary.json into `out_dir`. Files of a failed run are removed.
AnnealOutcome run_anneal(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                         const ProgressFn& progress = {});

struct SweepCell {
  double s_p;
  double l_p;
  double fidelity;
  double sigma;
};

struct SweepReport {
  std::vector<SweepCell> cells;
  std::size_t computed{0};
  std::size_t skipped{0};
  std::vector<std::string> failures;
};

/// One anneal per (s_p, l_p) cell with seeds derived from the cell values. With `resume`,
/// cells already present in sweep.csv are skipped; a completed sweep is left untouched.
SweepReport run_sweep(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, bool resume,
                      const ProgressFn& progress = {});

std::uint64_t cell_seed(std::uint64_t master, double s_p, double l_p);

/// Writes spectrum.csv (s, eps_1..eps_L) with the gap minimum in a comment line;
/// nullopt when the gap has no single interior minimum.
std::optional<GapMinimum> emit_spectrum(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

struct PopulationBar {
  int w;
  Estimate population;
};

/// First `levels` Hamming-weight populations; the uniform reference is 1/(n+1).
std::vector<PopulationBar> population_histogram(const RunResult& result, int levels);

/// Weak-coupling validity report for the configured instance, written to validity.txt.
ValidityReport run_validation(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

struct OracleRow {
  double s;
  double t;
  Estimate mcwf;
  double oracle;
  double z_score;  // (mcwf - oracle) / sqrt(sigma_mc^2 + 1/M^2)
};

/// MCWF against the dense integrator at the configured checkpoints; writes oracle_compare.csv.
std::vector<OracleRow> run_oracle_compare(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

/// Header comment lines shared by every CSV output.
std::string provenance_header(const ExperimentConfig& cfg);

}  // namespace qapause
