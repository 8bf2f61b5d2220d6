// qapause: command-line front end: spectrum, anneal, sweep, validate,
// oracle-compare and fit.

#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "qapause/oracle.hpp"
#include "qapause/protocol.hpp"

namespace fs = std::filesystem;
using namespace qapause;

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  bool resume{false};
  std::string out;
};

void add_common(CLI::App* cmd, CommonOptions& opts, bool needs_config = true) {
  auto* c = cmd->add_option("--config", opts.config, "experiment configuration file")->check(CLI::ExistingFile);
  if (needs_config) c->required();
  cmd->add_option("--seed", opts.seed, "master seed (overrides the config)");
  cmd->add_option("--workers", opts.workers, "worker threads (overrides the config)")->check(CLI::PositiveNumber);
  cmd->add_flag("--resume", opts.resume, "skip sweep cells already present in the output");
  cmd->add_option("--out", opts.out, "output directory (overrides the config)");
}

ExperimentConfig load_config(const CommonOptions& opts) {
  auto cfg = ExperimentConfig::load(opts.config);
  if (opts.seed) cfg.seed = *opts.seed;
  if (opts.workers) cfg.engine.workers = *opts.workers;
  if (!opts.out.empty()) cfg.out_dir = opts.out;
  return cfg;
}

void log_line(const std::string& msg) { std::cerr << "[qapause] " << msg << std::endl; }

std::vector<FitPoint> peak_fidelities(const fs::path& sweep_csv, std::optional<double> pause_s) {
  std::ifstream in(sweep_csv);
  if (!in) throw std::runtime_error("cannot open " + sweep_csv.string());
  std::map<double, double> best;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    if (!header_seen) {
      header_seen = true;
      if (line.rfind("s_p,l_p,fidelity", 0) != 0) throw std::runtime_error("unexpected sweep header: " + line);
      continue;
    }
    std::istringstream fields(line);
    std::string a, b, c;
    std::getline(fields, a, ',');
    std::getline(fields, b, ',');
    std::getline(fields, c, ',');
    const double s = std::stod(a), l = std::stod(b), phi = std::stod(c);
    if (pause_s && std::abs(s - *pause_s) > 1e-9) continue;
    auto it = best.find(l);
    if (it == best.end() || phi > it->second) best[l] = phi;
  }
  std::vector<FitPoint> points;
  for (const auto& [l, phi] : best) points.push_back({l, phi});
  return points;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Open-system quantum annealing with pauses: MCWF simulation and analysis"};
  app.require_subcommand(1);
  CommonOptions opts;

  auto* spectrum = app.add_subcommand("spectrum", "lowest levels of H_Q(s) and the minimum gap");
  auto* anneal = app.add_subcommand("anneal", "MCWF anneal for the configured protocol");
  auto* sweep = app.add_subcommand("sweep", "fidelity over a grid of pause points and lengths");
  auto* validate = app.add_subcommand("validate", "weak-coupling validity conditions");
  auto* oracle = app.add_subcommand("oracle-compare", "MCWF against the dense density-matrix integrator");
  auto* fit = app.add_subcommand("fit", "saturation-law fit of peak fidelities from a sweep");
  for (auto* cmd : {spectrum, anneal, sweep, validate, oracle}) add_common(cmd, opts);
  add_common(fit, opts, false);

  std::string fit_input;
  double fit_l0 = 100.0;
  std::optional<double> fit_pause_s;
  fit->add_option("--input", fit_input, "sweep CSV (default: <out>/sweep.csv)");
  fit->add_option("--l0", fit_l0, "fixed offset l0 in ns")->capture_default_str();
  fit->add_option("--pause-s", fit_pause_s, "use only this pause point instead of the per-length peak");

  CLI11_PARSE(app, argc, argv);

  try {
    if (fit->parsed()) {
      fs::path out = opts.out.empty() ? fs::path("out") : fs::path(opts.out);
      if (!opts.config.empty()) {
        const auto cfg = load_config(opts);
        out = cfg.out_dir;
      }
      const fs::path input = fit_input.empty() ? out / "sweep.csv" : fs::path(fit_input);
      const auto points = peak_fidelities(input, fit_pause_s);
      const auto result = fit_saturation(points, fit_l0);
      std::ostringstream report;
      report << "# input=" << input.string() << "\n";
      for (const auto& p : points) report << "# point l_p=" << p.l << " phi=" << p.phi << "\n";
      report << result.to_text();
      fs::create_directories(out);
      std::ofstream(out / "fit.txt") << report.str();
      std::cout << report.str();
      return 0;
    }

    const auto cfg = load_config(opts);
    const fs::path out = cfg.out_dir;
    if (spectrum->parsed()) {
      const auto gap = emit_spectrum(cfg, out);
      if (gap) {
        std::cout << "min gap " << gap->gap << " at s=" << gap->s << "\n";
      } else {
        std::cout << "gap has no single interior minimum; see spectrum.csv\n";
      }
      std::cout << "wrote " << (out / "spectrum.csv").string() << "\n";
    } else if (anneal->parsed()) {
      const auto outcome = run_anneal(cfg, out, log_line);
      std::cout << "fidelity " << outcome.result.fidelity.mean << " +- " << outcome.result.fidelity.error
                << " (M=" << outcome.result.trajectories << ", dt=" << outcome.dt << " ns, "
                << outcome.wall_seconds << " s)\n";
      std::cout << "wrote " << out.string() << "/{rho11,populations,histogram,eigen_populations}.csv, summary.json\n";
    } else if (sweep->parsed()) {
      const auto report = run_sweep(cfg, out, opts.resume, log_line);
      std::cout << "cells computed " << report.computed << ", skipped " << report.skipped << ", failed "
                << report.failures.size() << "\n";
      for (const auto& c : report.cells) {
        std::cout << "s_p=" << c.s_p << " l_p=" << c.l_p << " fidelity=" << c.fidelity << " +- " << c.sigma << "\n";
      }
      if (!report.failures.empty()) return 1;
    } else if (validate->parsed()) {
      const auto report = run_validation(cfg, out);
      std::cout << report.to_text();
      std::cout << (report.markovian_conditions_pass() ? "weak-coupling conditions hold\n"
                                                       : "some weak-coupling conditions fail\n");
    } else if (oracle->parsed()) {
      const auto rows = run_oracle_compare(cfg, out);
      double worst = 0.0;
      for (const auto& r : rows) {
        std::cout << "s=" << r.s << " mcwf=" << r.mcwf.mean << " +- " << r.mcwf.error << " oracle=" << r.oracle
                  << " z=" << r.z_score << "\n";
        worst = std::max(worst, std::abs(r.z_score));
      }
      std::cout << "max |z| = " << worst << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
