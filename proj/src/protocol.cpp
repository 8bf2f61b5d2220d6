#include "qapause/protocol.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "qapause/oracle.hpp"
#include "qapause/rng.hpp"

namespace qapause {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Protocol

void PauseProtocol::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw std::invalid_argument("protocol: tau must be positive");
  if (s_p) {
    if (!(*s_p >= 0.0 && *s_p <= 1.0)) throw std::invalid_argument("protocol: pause point must lie in [0, 1]");
    if (!(l_p >= 0.0) || !std::isfinite(l_p)) throw std::invalid_argument("protocol: pause length must be >= 0");
  }
}

Timeline PauseProtocol::timeline() const {
  validate();
  Timeline tl;
  if (!s_p || l_p == 0.0) {
    tl.segments.push_back({0.0, tau, 0.0, 1.0});
    return tl;
  }
  const double t_hold = *s_p * tau;
  if (t_hold > 0.0) tl.segments.push_back({0.0, t_hold, 0.0, *s_p});
  tl.segments.push_back({t_hold, t_hold + l_p, *s_p, *s_p});
  if (*s_p < 1.0) tl.segments.push_back({t_hold + l_p, tau + l_p, *s_p, 1.0});
  return tl;
}

double pause_map(double t, const PauseProtocol& protocol) {
  protocol.validate();
  const double total = protocol.total_time();
  if (!(t >= 0.0 && t <= total)) {
    std::ostringstream msg;
    msg << "pause_map: t=" << t << " outside [0, " << total << "]";
    throw std::out_of_range(msg.str());
  }
  if (!protocol.s_p) return t / protocol.tau;
  const double start = protocol.pause_start();
  if (t < start) return t / protocol.tau;
  if (t < start + protocol.l_p) return *protocol.s_p;
  return std::min(1.0, (t - protocol.l_p) / protocol.tau);
}

std::vector<double> output_times(const PauseProtocol& protocol, int s_points, int pause_points) {
  if (s_points < 2) throw std::invalid_argument("output_times: need at least two s points");
  std::vector<double> times;
  const bool paused = protocol.s_p && protocol.l_p > 0.0;
  for (int k = 0; k < s_points; ++k) {
    const double s = k + 1 == s_points ? 1.0 : static_cast<double>(k) / (s_points - 1);
    const double t = s * protocol.tau;
    times.push_back(paused && s > *protocol.s_p ? t + protocol.l_p : t);
  }
  if (paused) {
    const int m = std::max(pause_points, 2);
    for (int j = 1; j < m; ++j) times.push_back(protocol.pause_start() + protocol.l_p * j / (m - 1));
  }
  times.push_back(protocol.total_time());
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  return times;
}

// ---------------------------------------------------------------------------
// Key-value documents

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string& text, int line) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != text.size() || text.empty() || !std::isfinite(v)) {
    throw ConfigError("config line " + std::to_string(line) + ": '" + text + "' is not a finite number");
  }
  return v;
}

std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    if (line[k] == '"') quoted = !quoted;
    if (line[k] == '#' && !quoted) return line.substr(0, k);
  }
  return line;
}

}  // namespace

KeyValueDocument KeyValueDocument::parse(const std::string& text) {
  KeyValueDocument doc;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string body = trim(strip_comment(raw));
    if (body.empty()) continue;
    if (body.front() == '[') {
      if (body.back() != ']') throw ConfigError("config line " + std::to_string(line) + ": malformed section header");
      section = trim(body.substr(1, body.size() - 2));
      if (section.empty()) throw ConfigError("config line " + std::to_string(line) + ": empty section name");
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line) + ": expected key = value");
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    if (key.empty() || !std::all_of(key.begin(), key.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; })) {
      throw ConfigError("config line " + std::to_string(line) + ": invalid key '" + key + "'");
    }
    if (value.empty()) throw ConfigError("config line " + std::to_string(line) + ": missing value for '" + key + "'");
    Value parsed;
    if (value.front() == '"') {
      if (value.size() < 2 || value.back() != '"' || value.find('"', 1) != value.size() - 1) {
        throw ConfigError("config line " + std::to_string(line) + ": malformed string");
      }
      parsed = value.substr(1, value.size() - 2);
    } else if (value == "true" || value == "false") {
      parsed = value == "true";
    } else if (value.front() == '[') {
      if (value.back() != ']') throw ConfigError("config line " + std::to_string(line) + ": unterminated array");
      std::vector<double> items;
      std::istringstream parts(value.substr(1, value.size() - 2));
      std::string item;
      while (std::getline(parts, item, ',')) {
        item = trim(item);
        if (!item.empty()) items.push_back(parse_number(item, line));
      }
      parsed = items;
    } else {
      parsed = parse_number(value, line);
    }
    auto& slot = doc.values_[section];
    if (slot.count(key)) throw ConfigError("config line " + std::to_string(line) + ": duplicate key '" + key + "'");
    slot[key] = parsed;
    doc.lines_[section + "." + key] = line;
  }
  return doc;
}

bool KeyValueDocument::has(const std::string& section, const std::string& key) const {
  const auto it = values_.find(section);
  return it != values_.end() && it->second.count(key) > 0;
}

const KeyValueDocument::Value& KeyValueDocument::get(const std::string& section, const std::string& key) const {
  if (!has(section, key)) throw ConfigError("config: missing key [" + section + "] " + key);
  used_[section + "." + key] = true;
  return values_.at(section).at(key);
}

double KeyValueDocument::number(const std::string& section, const std::string& key) const {
  const auto& v = get(section, key);
  if (const auto* d = std::get_if<double>(&v)) return *d;
  throw ConfigError("config: [" + section + "] " + key + " must be a number");
}

bool KeyValueDocument::boolean(const std::string& section, const std::string& key) const {
  const auto& v = get(section, key);
  if (const auto* b = std::get_if<bool>(&v)) return *b;
  throw ConfigError("config: [" + section + "] " + key + " must be true or false");
}

std::string KeyValueDocument::string(const std::string& section, const std::string& key) const {
  const auto& v = get(section, key);
  if (const auto* s = std::get_if<std::string>(&v)) return *s;
  throw ConfigError("config: [" + section + "] " + key + " must be a quoted string");
}

std::vector<double> KeyValueDocument::array(const std::string& section, const std::string& key) const {
  const auto& v = get(section, key);
  if (const auto* a = std::get_if<std::vector<double>>(&v)) return *a;
  if (const auto* d = std::get_if<double>(&v)) return {*d};
  throw ConfigError("config: [" + section + "] " + key + " must be an array of numbers");
}

void KeyValueDocument::reject_unused() const {
  for (const auto& [section, keys] : values_) {
    for (const auto& [key, value] : keys) {
      const std::string id = section + "." + key;
      if (!used_.count(id)) {
        throw ConfigError("config line " + std::to_string(lines_.at(id)) + ": unknown key [" + section + "] " + key);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Experiment configuration

void SweepGrid::validate() const {
  if (s_p.empty() || l_p.empty()) throw ConfigError("sweep: pause_s and pause_length must be non-empty");
  for (double s : s_p) {
    if (!(s >= 0.0 && s <= 1.0)) throw ConfigError("sweep: pause point outside [0, 1]");
  }
  for (double l : l_p) {
    if (!(l >= 0.0)) throw ConfigError("sweep: negative pause length");
  }
}

namespace {

int integer(const KeyValueDocument& doc, const std::string& section, const std::string& key, int lo) {
  const double v = doc.number(section, key);
  if (v != std::floor(v) || v < lo || v > 2e9) {
    throw ConfigError("config: [" + section + "] " + key + " must be an integer >= " + std::to_string(lo));
  }
  return static_cast<int>(v);
}

}  // namespace

ExperimentConfig ExperimentConfig::parse(const std::string& text, const fs::path& base_dir) {
  const auto doc = KeyValueDocument::parse(text);
  ExperimentConfig c;
  auto opt = [&](const char* section, const char* key, auto&& apply) {
    if (doc.has(section, key)) apply();
  };
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base_dir / p; };

  try {
    opt("model", "problem", [&] { c.problem = parse_problem_kind(doc.string("model", "problem")); });
    opt("model", "n", [&] { c.n = integer(doc, "model", "n", 1); });
    if (c.problem == ProblemKind::Search) c.p.reset();
    opt("model", "p", [&] { c.p = integer(doc, "model", "p", 1); });
    opt("model", "schedule", [&] { c.schedule = resolve(doc.string("model", "schedule")); });

    opt("bath", "eta", [&] { c.eta = doc.number("bath", "eta"); });
    opt("bath", "temperature", [&] { c.temperature = doc.number("bath", "temperature"); });
    opt("bath", "temperature_mk", [&] {
      if (doc.has("bath", "temperature")) throw ConfigError("config: give temperature or temperature_mk, not both");
      c.temperature = kelvin_to_angular_ghz(doc.number("bath", "temperature_mk") * 1e-3);
    });
    opt("bath", "omega_c", [&] { c.omega_c = doc.number("bath", "omega_c"); });
    opt("bath", "lamb_shift", [&] { c.engine.lamb_shift = doc.boolean("bath", "lamb_shift"); });

    opt("protocol", "tau", [&] { c.protocol.tau = doc.number("protocol", "tau"); });
    opt("protocol", "pause_s", [&] { c.protocol.s_p = doc.number("protocol", "pause_s"); });
    opt("protocol", "pause_length", [&] { c.protocol.l_p = doc.number("protocol", "pause_length"); });

    opt("run", "trajectories", [&] { c.trajectories = static_cast<std::size_t>(integer(doc, "run", "trajectories", 1)); });
    opt("run", "seed", [&] {
      const double v = doc.number("run", "seed");
      if (v < 0 || v != std::floor(v) || v > 9007199254740992.0) throw ConfigError("config: [run] seed must be an integer in [0, 2^53]");
      c.seed = static_cast<std::uint64_t>(v);
    });
    opt("run", "dt", [&] { c.engine.dt = doc.number("run", "dt"); });
    opt("run", "workers", [&] { c.engine.workers = integer(doc, "run", "workers", 1); });
    opt("run", "converge_dt", [&] { c.converge_dt = doc.boolean("run", "converge_dt"); });
    opt("run", "output_points", [&] { c.output_points = integer(doc, "run", "output_points", 2); });
    opt("run", "pause_points", [&] { c.pause_points = integer(doc, "run", "pause_points", 2); });
    opt("run", "out", [&] { c.out_dir = resolve(doc.string("run", "out")); });

    opt("spectrum", "levels", [&] { c.spectrum_levels = integer(doc, "spectrum", "levels", 1); });
    opt("spectrum", "points", [&] { c.spectrum_points = integer(doc, "spectrum", "points", 2); });
    opt("histogram", "levels", [&] { c.histogram_levels = integer(doc, "histogram", "levels", 1); });
    opt("oracle", "checkpoints", [&] { c.oracle_checkpoints = integer(doc, "oracle", "checkpoints", 1); });

    opt("sweep", "pause_s", [&] { c.sweep.s_p = doc.array("sweep", "pause_s"); });
    opt("sweep", "pause_length", [&] { c.sweep.l_p = doc.array("sweep", "pause_length"); });
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  doc.reject_unused();

  if (c.problem == ProblemKind::PSpin && !c.p) throw ConfigError("config: [model] p is required for the p-spin problem");
  if (c.problem == ProblemKind::Search && c.p) throw ConfigError("config: [model] p is not used by the search problem");
  if (c.n > kMaxQubits) throw ConfigError("config: [model] n exceeds " + std::to_string(kMaxQubits));
  if (!(c.engine.dt > 0.0)) throw ConfigError("config: [run] dt must be positive");
  try {
    c.protocol.validate();
    (void)c.bath();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (c.spectrum_levels > c.n + 1) c.spectrum_levels = c.n + 1;
  if (c.histogram_levels > c.n + 1) c.histogram_levels = c.n + 1;
  if (!c.sweep.s_p.empty() || !c.sweep.l_p.empty()) c.sweep.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str(), path.parent_path());
}

AnnealModel ExperimentConfig::model() const {
  auto sched = schedule.empty() ? AnnealSchedule::linear() : AnnealSchedule::load(schedule);
  return AnnealModel(build_sector(n), build_problem(problem, n, p), std::move(sched));
}

std::string ExperimentConfig::canonical() const {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "problem=" << to_string(problem) << ";n=" << n << ";p=" << (p ? *p : 0);
  out << ";schedule_hash=" << hex64(schedule.empty() ? AnnealSchedule::linear().content_hash()
                                                      : AnnealSchedule::load(schedule).content_hash());
  out << ";eta=" << eta << ";T=" << temperature << ";omega_c=" << omega_c << ";lamb_shift=" << engine.lamb_shift;
  out << ";tau=" << protocol.tau << ";s_p=" << (protocol.s_p ? *protocol.s_p : -1.0) << ";l_p=" << protocol.l_p;
  out << ";M=" << trajectories << ";seed=" << seed << ";dt=" << engine.dt << ";converge_dt=" << converge_dt;
  out << ";output_points=" << output_points << ";pause_points=" << pause_points;
  out << ";sweep_s=";
  for (double s : sweep.s_p) out << s << ',';
  out << ";sweep_l=";
  for (double l : sweep.l_p) out << l << ',';
  return out.str();
}

std::uint64_t ExperimentConfig::hash() const { return fnv1a(canonical()); }

std::string hex64(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << v;
  return out.str();
}

namespace {

std::string schedule_note(const ExperimentConfig& cfg) {
  if (cfg.schedule.empty()) return "linear A(s) = 1 - s, B(s) = s";
  std::ifstream in(cfg.schedule);
  std::string first;
  std::getline(in, first);
  if (!first.empty() && first.front() == '#') return trim(first.substr(1));
  return cfg.schedule.filename().string();
}

}  // namespace

std::string provenance_header(const ExperimentConfig& cfg) {
  std::ostringstream out;
  const auto model = cfg.model();
  out << "# config_hash=" << hex64(cfg.hash()) << "\n";
  out << "# schedule=" << (cfg.schedule.empty() ? std::string("linear") : cfg.schedule.filename().string())
      << " schedule_hash=" << hex64(model.schedule().content_hash()) << "\n";
  out << "# schedule_note: " << schedule_note(cfg) << "\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Output helpers

namespace {

class OutputSet {
 public:
  explicit OutputSet(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }
  void write(const std::string& name, const std::string& content) {
    const fs::path target = dir_ / name;
    const fs::path tmp = dir_ / (name + ".tmp");
    {
      std::ofstream out(tmp, std::ios::binary);
      out << content;
      if (!out) throw std::runtime_error("cannot write " + tmp.string());
    }
    fs::rename(tmp, target);
    written_.push_back(target);
  }
  void discard() {
    std::error_code ec;
    for (const auto& p : written_) fs::remove(p, ec);
  }

 private:
  fs::path dir_;
  std::vector<fs::path> written_;
};

std::string fmt(double v, int digits = 10) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

RunResult run_engine(const ExperimentConfig& cfg, const AnnealModel& model, const PauseProtocol& protocol,
                     std::uint64_t seed, double dt, std::shared_ptr<const LambShiftTable> lamb,
                     const ProgressFn& progress) {
  EngineConfig ec = cfg.engine;
  ec.dt = dt;
  const McwfEngine engine(model, cfg.bath(), protocol.timeline(),
                          output_times(protocol, cfg.output_points, cfg.pause_points), ec, std::move(lamb));
  std::function<void(std::size_t)> tick;
  if (progress) {
    const std::size_t stride = std::max<std::size_t>(1, cfg.trajectories / 10);
    tick = [&, stride](std::size_t done) {
      if (done % stride == 0 || done == cfg.trajectories) {
        progress("trajectories " + std::to_string(done) + "/" + std::to_string(cfg.trajectories));
      }
    };
  }
  return engine.run(seed, cfg.trajectories, false, tick);
}

std::shared_ptr<const LambShiftTable> lamb_for(const ExperimentConfig& cfg, const AnnealModel& model) {
  if (cfg.eta > 0.0 && cfg.engine.lamb_shift) return make_lamb_table(model, cfg.bath());
  return std::make_shared<const LambShiftTable>();
}

}  // namespace

std::vector<PopulationBar> population_histogram(const RunResult& result, int levels) {
  std::vector<PopulationBar> out;
  const int count = std::min<int>(levels, static_cast<int>(result.final_weight.size()));
  for (int w = 0; w < count; ++w) out.push_back({w, result.final_weight[static_cast<std::size_t>(w)]});
  return out;
}

AnnealOutcome run_anneal(const ExperimentConfig& cfg, const fs::path& out_dir, const ProgressFn& progress) {
  const auto start = std::chrono::steady_clock::now();
  const auto model = cfg.model();
  const auto lamb = lamb_for(cfg, model);
  AnnealOutcome outcome;
  outcome.dt = cfg.engine.dt;
  outcome.result = run_engine(cfg, model, cfg.protocol, cfg.seed, outcome.dt, lamb, progress);
  if (cfg.converge_dt) {
    // halve dt until rho11(s) moves by less than sigma_MC everywhere
    for (int round = 0; round < 4; ++round) {
      const double finer = 0.5 * outcome.dt;
      if (progress) progress("convergence check at dt=" + fmt(finer));
      auto next = run_engine(cfg, model, cfg.protocol, cfg.seed, finer, lamb, progress);
      bool stable = true;
      for (std::size_t k = 0; k < next.rho11.size(); ++k) {
        const double sigma = std::max(next.rho11[k].error, outcome.result.rho11[k].error);
        if (std::abs(next.rho11[k].mean - outcome.result.rho11[k].mean) >= std::max(sigma, 1e-12)) stable = false;
      }
      outcome.result = std::move(next);
      outcome.dt = finer;
      if (stable) break;
    }
  }
  outcome.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const auto& r = outcome.result;
  const std::string header = provenance_header(cfg);
  OutputSet files(out_dir);
  try {
    std::ostringstream rho;
    rho << header << "s,rho11_mean,rho11_err,t\n";
    for (std::size_t k = 0; k < r.times.size(); ++k) {
      rho << fmt(r.s[k]) << ',' << fmt(r.rho11[k].mean) << ',' << fmt(r.rho11[k].error) << ',' << fmt(r.times[k])
          << '\n';
    }
    files.write("rho11.csv", rho.str());

    const double uniform = 1.0 / (cfg.n + 1);
    std::ostringstream pops;
    pops << header << "# uniform reference 1/N = " << fmt(uniform) << "\nw,population,error\n";
    for (std::size_t w = 0; w < r.final_weight.size(); ++w) {
      pops << w << ',' << fmt(r.final_weight[w].mean) << ',' << fmt(r.final_weight[w].error) << '\n';
    }
    files.write("populations.csv", pops.str());

    std::ostringstream hist;
    hist << header << "w,population,error,uniform\n";
    for (const auto& bar : population_histogram(r, cfg.histogram_levels)) {
      hist << bar.w << ',' << fmt(bar.population.mean) << ',' << fmt(bar.population.error) << ',' << fmt(uniform)
           << '\n';
    }
    files.write("histogram.csv", hist.str());

    std::ostringstream eig;
    eig << header << "level,population,error\n";
    for (std::size_t a = 0; a < r.final_eigen.size(); ++a) {
      eig << a + 1 << ',' << fmt(r.final_eigen[a].mean) << ',' << fmt(r.final_eigen[a].error) << '\n';
    }
    files.write("eigen_populations.csv", eig.str());

    nlohmann::json summary = {
        {"fidelity", r.fidelity.mean},
        {"sigma", r.fidelity.error},
        {"trajectories", r.trajectories},
        {"seed", cfg.seed},
        {"dt", outcome.dt},
        {"config_hash", hex64(cfg.hash())},
        {"schedule_hash", hex64(model.schedule().content_hash())},
        {"schedule_note", schedule_note(cfg)},
        {"wall_clock_seconds", outcome.wall_seconds},
        {"jumps", {{"mean", r.mean_jumps}, {"max", r.max_jumps}}},
        {"protocol",
         {{"tau", cfg.protocol.tau},
          {"pause_s", cfg.protocol.s_p ? nlohmann::json(*cfg.protocol.s_p) : nlohmann::json(nullptr)},
          {"pause_length", cfg.protocol.l_p},
          {"total_time", cfg.protocol.total_time()}}},
        {"bath",
         {{"eta", cfg.eta}, {"temperature", cfg.temperature}, {"omega_c", cfg.omega_c},
          {"lamb_shift", cfg.engine.lamb_shift}}},
    };
    files.write("summary.json", summary.dump(2) + "\n");
  } catch (...) {
    files.discard();
    throw;
  }
  return outcome;
}

// ---------------------------------------------------------------------------
// Sweeps

std::uint64_t cell_seed(std::uint64_t master, double s_p, double l_p) {
  return derive_seed(master, std::bit_cast<std::uint64_t>(s_p), std::bit_cast<std::uint64_t>(l_p));
}

namespace {

std::string cell_key(double s_p, double l_p) { return fmt(s_p, 6) + "," + fmt(l_p, 6); }

std::string cell_row(const SweepCell& c) {
  return cell_key(c.s_p, c.l_p) + "," + fmt(c.fidelity) + "," + fmt(c.sigma) + "\n";
}

}  // namespace

SweepReport run_sweep(const ExperimentConfig& cfg, const fs::path& out_dir, bool resume, const ProgressFn& progress) {
  cfg.sweep.validate();
  fs::create_directories(out_dir);
  const fs::path table = out_dir / "sweep.csv";
  const fs::path failures = out_dir / "sweep_failures.csv";

  // the header identifies the base configuration; the grid itself may grow between resumes
  ExperimentConfig base = cfg;
  base.sweep = {};
  base.protocol.s_p.reset();
  base.protocol.l_p = 0.0;
  const std::string header = provenance_header(base) + "s_p,l_p,fidelity,sigma\n";

  std::map<std::string, SweepCell> done;
  if (resume && fs::exists(table)) {
    std::ifstream in(table);
    std::stringstream buffer;
    buffer << in.rdbuf();
    const std::string content = buffer.str();
    if (content.compare(0, header.size(), header) != 0) {
      throw ConfigError("sweep: " + table.string() + " was produced by a different configuration");
    }
    std::istringstream rows(content.substr(header.size()));
    std::string line;
    while (std::getline(rows, line)) {
      if (line.empty()) continue;
      std::istringstream fields(line);
      std::string a, b, c, d;
      std::getline(fields, a, ',');
      std::getline(fields, b, ',');
      std::getline(fields, c, ',');
      std::getline(fields, d, ',');
      try {
        done[a + "," + b] = {std::stod(a), std::stod(b), std::stod(c), std::stod(d)};
      } catch (const std::exception&) {
        throw ConfigError("sweep: malformed row in " + table.string() + ": " + line);
      }
    }
  } else {
    std::ofstream(table, std::ios::binary) << header;
    std::error_code ec;
    fs::remove(failures, ec);
  }

  const auto model = cfg.model();
  std::shared_ptr<const LambShiftTable> lamb;
  SweepReport report;
  for (double l_p : cfg.sweep.l_p) {
    for (double s_p : cfg.sweep.s_p) {
      const std::string key = cell_key(s_p, l_p);
      if (done.count(key)) {
        ++report.skipped;
        continue;
      }
      if (!lamb) lamb = lamb_for(cfg, model);
      PauseProtocol protocol = cfg.protocol;
      protocol.s_p = s_p;
      protocol.l_p = l_p;
      try {
        const auto r = run_engine(cfg, model, protocol, cell_seed(cfg.seed, s_p, l_p), cfg.engine.dt, lamb, {});
        const SweepCell cell{s_p, l_p, r.fidelity.mean, r.fidelity.error};
        done[key] = cell;
        std::ofstream(table, std::ios::app | std::ios::binary) << cell_row(cell);
        ++report.computed;
        if (progress) progress("cell s_p=" + fmt(s_p, 6) + " l_p=" + fmt(l_p, 6) + " fidelity=" + fmt(cell.fidelity, 6));
      } catch (const std::exception& e) {
        const std::string line = key + "," + e.what();
        report.failures.push_back(line);
        const bool fresh = !fs::exists(failures);
        std::ofstream out(failures, std::ios::app | std::ios::binary);
        if (fresh) out << "s_p,l_p,error\n";
        out << line << '\n';
        if (progress) progress("cell s_p=" + fmt(s_p, 6) + " l_p=" + fmt(l_p, 6) + " failed: " + e.what());
      }
    }
  }

  // canonical grid order once new cells were added
  std::vector<SweepCell> ordered;
  std::set<std::string> seen;
  for (double l_p : cfg.sweep.l_p) {
    for (double s_p : cfg.sweep.s_p) {
      const auto key = cell_key(s_p, l_p);
      if (done.count(key) && seen.insert(key).second) ordered.push_back(done[key]);
    }
  }
  for (const auto& [key, cell] : done) {
    if (!seen.count(key)) ordered.push_back(cell);  // rows from an earlier, larger grid
  }
  if (report.computed > 0) {
    std::ostringstream content;
    content << header;
    for (const auto& c : ordered) content << cell_row(c);
    OutputSet(out_dir).write("sweep.csv", content.str());
  }
  report.cells = std::move(ordered);
  return report;
}

// ---------------------------------------------------------------------------
// Spectrum, validity, oracle comparison

std::optional<GapMinimum> emit_spectrum(const ExperimentConfig& cfg, const fs::path& out_dir) {
  const auto model = cfg.model();
  std::optional<GapMinimum> gap;
  std::string gap_line;
  try {
    gap = locate_min_gap(model);
    gap_line = "# min_gap s=" + fmt(gap->s) + " gap=" + fmt(gap->gap) + "\n";
  } catch (const GapSearchError& e) {
    gap_line = std::string("# min_gap: ") + e.what() + "\n";
  }
  std::ostringstream out;
  out << provenance_header(cfg) << gap_line << "s";
  for (int k = 1; k <= cfg.spectrum_levels; ++k) out << ",eps_" << k;
  out << '\n';
  for (int i = 0; i < cfg.spectrum_points; ++i) {
    const double s = i + 1 == cfg.spectrum_points ? 1.0 : static_cast<double>(i) / (cfg.spectrum_points - 1);
    const auto eig = eigendecompose(model.hamiltonian(s));
    out << fmt(s);
    for (int k = 0; k < cfg.spectrum_levels; ++k) out << ',' << fmt(eig.energies(k), 12);
    out << '\n';
  }
  OutputSet(out_dir).write("spectrum.csv", out.str());
  return gap;
}

ValidityReport run_validation(const ExperimentConfig& cfg, const fs::path& out_dir) {
  const auto model = cfg.model();
  const auto bath = cfg.bath();
  const auto gap = locate_min_gap(model);
  const double h = adiabatic_h(model);
  auto report = check_validity(bath, gap.gap, h, cfg.protocol.tau, cfg.protocol.total_time());
  std::ostringstream out;
  out << provenance_header(cfg);
  out << "# min_gap s=" << fmt(gap.s) << " gap=" << fmt(gap.gap) << "\n";
  out << "# h = " << fmt(h) << ", h/gap^2 = " << fmt(h / (gap.gap * gap.gap)) << " ns\n";
  out << "# beta*omega_c = " << fmt(bath.beta * bath.omega_c) << "\n";
  for (const auto& w : bath.warnings()) out << "# warning: " << w << "\n";
  out << report.to_text();
  OutputSet(out_dir).write("validity.txt", out.str());
  return report;
}

std::vector<OracleRow> run_oracle_compare(const ExperimentConfig& cfg, const fs::path& out_dir) {
  const auto model = cfg.model();
  const auto bath = cfg.bath();
  const auto timeline = cfg.protocol.timeline();
  const double end = timeline.end_time();
  std::vector<double> checkpoints;
  for (int k = 1; k <= cfg.oracle_checkpoints; ++k) checkpoints.push_back(end * k / cfg.oracle_checkpoints);
  std::vector<double> samples = {0.0};
  samples.insert(samples.end(), checkpoints.begin(), checkpoints.end());

  const auto lamb = lamb_for(cfg, model);
  LindbladConfig lc;
  lc.lamb_shift = cfg.engine.lamb_shift;
  const DenseLindblad oracle(model, bath, timeline, lc, lamb);
  const auto rhos = oracle.integrate(checkpoints);

  const McwfEngine engine(model, bath, timeline, samples, cfg.engine, lamb);
  const auto result = engine.run(cfg.seed, cfg.trajectories);

  std::vector<OracleRow> rows;
  std::ostringstream out;
  // A sample of M trajectories cannot resolve jump probabilities below about 1/M, so
  // the z-score uses sigma_eff = sqrt(sigma_mc^2 + 1/M^2).
  const double floor = 1.0 / static_cast<double>(cfg.trajectories);
  out << provenance_header(cfg) << "# z_score = (rho11_mcwf - rho11_oracle) / sqrt(sigma_mc^2 + 1/M^2)\n"
      << "s,rho11_mcwf,sigma_mc,rho11_oracle,abs_diff,z_score\n";
  for (std::size_t k = 0; k < checkpoints.size(); ++k) {
    const auto& est = result.rho11[k + 1];
    const double ref = oracle.ground_population(checkpoints[k], rhos[k]);
    const double diff = est.mean - ref;
    const double z = diff / std::hypot(est.error, floor);
    rows.push_back({timeline.s_at(checkpoints[k]), checkpoints[k], est, ref, z});
    out << fmt(rows.back().s) << ',' << fmt(est.mean) << ',' << fmt(est.error) << ',' << fmt(ref) << ','
        << fmt(std::abs(diff)) << ',' << fmt(z) << '\n';
  }
  OutputSet(out_dir).write("oracle_compare.csv", out.str());
  return rows;
}

}  // namespace qapause
