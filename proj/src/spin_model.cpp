#include "qapause/spin_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace qapause {

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Sector and problem Hamiltonians

RMatrix SpinSector::sz_matrix() const { return sz.asDiagonal(); }

RMatrix SpinSector::sx_matrix() const {
  RMatrix m = RMatrix::Zero(dim(), dim());
  for (int w = 0; w < n; ++w) {
    m(w, w + 1) = sx_off(w);
    m(w + 1, w) = sx_off(w);
  }
  return m;
}

RMatrix SpinSector::sy_imag_matrix() const {
  RMatrix m = RMatrix::Zero(dim(), dim());
  for (int w = 0; w < n; ++w) {
    m(w, w + 1) = -sx_off(w);
    m(w + 1, w) = sx_off(w);
  }
  return m;
}

SpinSector build_sector(int n) {
  if (n <= 0 || n > kMaxQubits) {
    throw std::invalid_argument("build_sector: qubit count must lie in [1, " +
                                std::to_string(kMaxQubits) + "], got " + std::to_string(n));
  }
  SpinSector sector;
  sector.n = n;
  const double spin = 0.5 * n;
  sector.sz.resize(n + 1);
  sector.sx_off.resize(n);
  for (int w = 0; w <= n; ++w) sector.sz(w) = spin - w;
  for (int w = 0; w < n; ++w) {
    // <w|S_x|w+1> with m = S - (w+1) the lower magnetization
    const double m = spin - (w + 1);
    sector.sx_off(w) = 0.5 * std::sqrt(spin * (spin + 1.0) - m * (m + 1.0));
  }
  return sector;
}

double pspin_energy(int n, int p, int w) {
  if (n <= 0 || w < 0 || w > n || p < 1) {
    throw std::invalid_argument("pspin_energy: require n > 0, 0 <= w <= n, p >= 1");
  }
  const double magnetization = 1.0 - 2.0 * w / n;
  return -0.5 * n * std::pow(magnetization, p);
}

std::string to_string(ProblemKind kind) { return kind == ProblemKind::PSpin ? "pspin" : "search"; }

ProblemKind parse_problem_kind(const std::string& text) {
  if (text == "pspin" || text == "p-spin") return ProblemKind::PSpin;
  if (text == "search") return ProblemKind::Search;
  throw std::invalid_argument("unknown problem kind '" + text + "' (expected pspin or search)");
}

ProblemHamiltonian build_problem(ProblemKind kind, int n, std::optional<int> p) {
  if (n <= 0 || n > kMaxQubits) throw std::invalid_argument("build_problem: bad qubit count");
  ProblemHamiltonian h;
  h.kind = kind;
  h.n = n;
  h.diagonal = RVector::Zero(n + 1);
  if (kind == ProblemKind::PSpin) {
    if (!p) throw std::invalid_argument("build_problem: p-spin problem requires p");
    if (*p < 1) throw std::invalid_argument("build_problem: p must be >= 1");
    h.p = *p;
    for (int w = 0; w <= n; ++w) h.diagonal(w) = pspin_energy(n, *p, w);
  } else {
    h.diagonal(0) = -0.5 * n;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Schedule

namespace {

// Fritsch-Carlson/Butland slopes, as in the usual PCHIP construction.
std::vector<double> pchip_slopes(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  std::vector<double> m(n, 0.0);
  if (n == 2) {
    m[0] = m[1] = (y[1] - y[0]) / (x[1] - x[0]);
    return m;
  }
  std::vector<double> h(n - 1), delta(n - 1);
  for (std::size_t k = 0; k + 1 < n; ++k) {
    h[k] = x[k + 1] - x[k];
    delta[k] = (y[k + 1] - y[k]) / h[k];
  }
  for (std::size_t k = 1; k + 1 < n; ++k) {
    if (delta[k - 1] * delta[k] <= 0.0) {
      m[k] = 0.0;
    } else {
      const double w1 = 2.0 * h[k] + h[k - 1];
      const double w2 = h[k] + 2.0 * h[k - 1];
      m[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
    }
  }
  auto end_slope = [](double h0, double h1, double d0, double d1) {
    double d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if (d * d0 <= 0.0) return 0.0;
    if (d0 * d1 <= 0.0 && std::abs(d) > std::abs(3.0 * d0)) return 3.0 * d0;
    return d;
  };
  m[0] = end_slope(h[0], h[1], delta[0], delta[1]);
  m[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
  return m;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

}  // namespace

AnnealSchedule AnnealSchedule::from_samples(std::vector<ScheduleSample> samples, std::string label) {
  if (samples.size() < 2) throw ScheduleError("schedule needs at least two samples");
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const auto& r = samples[k];
    if (!std::isfinite(r.s) || !std::isfinite(r.a) || !std::isfinite(r.b)) {
      throw ScheduleError("schedule row " + std::to_string(k) + ": non-finite value");
    }
    if (r.a < 0.0 || r.b < 0.0) {
      throw ScheduleError("schedule row " + std::to_string(k) + ": negative A or B");
    }
    if (k > 0) {
      const auto& prev = samples[k - 1];
      if (!(r.s > prev.s)) {
        throw ScheduleError("schedule row " + std::to_string(k) + ": s not strictly increasing");
      }
      if (r.a > prev.a) {
        throw ScheduleError("schedule row " + std::to_string(k) + ": A increases");
      }
      if (r.b < prev.b) {
        throw ScheduleError("schedule row " + std::to_string(k) + ": B decreases");
      }
    }
  }
  if (samples.front().s != 0.0 || samples.back().s != 1.0) {
    throw ScheduleError("schedule must cover s in [0, 1] exactly");
  }
  const auto& first = samples.front();
  const auto& last = samples.back();
  if (!(first.a > 0.0) || !(first.b < 1e-2 * first.a)) {
    throw ScheduleError("schedule row 0: require B(0)/A(0) < 1e-2");
  }
  if (!(last.b > 0.0) || !(last.a < 1e-2 * last.b)) {
    throw ScheduleError("schedule row " + std::to_string(samples.size() - 1) +
                        ": require A(1)/B(1) < 1e-2");
  }

  AnnealSchedule sched;
  sched.samples_ = std::move(samples);
  sched.label_ = std::move(label);
  for (const auto& r : sched.samples_) {
    sched.s_.push_back(r.s);
    sched.a_.push_back(r.a);
    sched.b_.push_back(r.b);
  }
  sched.da_ = pchip_slopes(sched.s_, sched.a_);
  sched.db_ = pchip_slopes(sched.s_, sched.b_);
  if (sched.hash_ == 0) {
    std::string bytes(reinterpret_cast<const char*>(sched.samples_.data()),
                      sched.samples_.size() * sizeof(ScheduleSample));
    sched.hash_ = fnv1a(bytes);
  }
  return sched;
}

AnnealSchedule AnnealSchedule::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ScheduleError("cannot open schedule file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string content = buffer.str();

  std::vector<ScheduleSample> rows;
  std::istringstream lines(content);
  std::string line;
  bool header_seen = false;
  int line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (!header_seen) {
      std::string compact;
      for (char c : t)
        if (c != ' ' && c != '\t') compact += c;
      if (compact != "s,A,B") {
        throw ScheduleError(path.string() + ":" + std::to_string(line_no) +
                            ": expected header 's,A,B'");
      }
      header_seen = true;
      continue;
    }
    std::istringstream fields(t);
    std::string f0, f1, f2, extra;
    if (!std::getline(fields, f0, ',') || !std::getline(fields, f1, ',') ||
        !std::getline(fields, f2, ',') || std::getline(fields, extra, ',')) {
      throw ScheduleError(path.string() + ":" + std::to_string(line_no) + ": expected 3 fields");
    }
    try {
      std::size_t used = 0;
      ScheduleSample r{};
      r.s = std::stod(f0, &used);
      if (trim(f0.substr(used)).size()) throw std::invalid_argument(f0);
      r.a = std::stod(f1, &used);
      if (trim(f1.substr(used)).size()) throw std::invalid_argument(f1);
      r.b = std::stod(f2, &used);
      if (trim(f2.substr(used)).size()) throw std::invalid_argument(f2);
      rows.push_back(r);
    } catch (const std::logic_error&) {
      throw ScheduleError(path.string() + ":" + std::to_string(line_no) + ": malformed number");
    }
  }
  if (!header_seen) throw ScheduleError(path.string() + ": missing header");
  try {
    auto sched = from_samples(std::move(rows), path.filename().string());
    sched.hash_ = fnv1a(content);
    return sched;
  } catch (const ScheduleError& e) {
    throw ScheduleError(path.string() + ": " + e.what());
  }
}

AnnealSchedule AnnealSchedule::linear(int nodes) {
  std::vector<ScheduleSample> rows;
  for (int k = 0; k < nodes; ++k) {
    const double s = (k == nodes - 1) ? 1.0 : static_cast<double>(k) / (nodes - 1);
    rows.push_back({s, 1.0 - s, s});
  }
  return from_samples(std::move(rows), "linear");
}

std::size_t AnnealSchedule::interval(double s) const {
  if (!(s >= 0.0 && s <= 1.0)) throw std::out_of_range("schedule: s outside [0, 1]");
  auto it = std::upper_bound(s_.begin(), s_.end(), s);
  std::size_t k = static_cast<std::size_t>(it - s_.begin());
  if (k == 0) return 0;
  return std::min(k - 1, s_.size() - 2);
}

double AnnealSchedule::eval(double s, const std::vector<double>& y,
                            const std::vector<double>& m) const {
  const std::size_t k = interval(s);
  const double h = s_[k + 1] - s_[k];
  const double t = (s - s_[k]) / h;
  const double t2 = t * t;
  const double t3 = t2 * t;
  const double h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
  const double h10 = t3 - 2.0 * t2 + t;
  const double h01 = -2.0 * t3 + 3.0 * t2;
  const double h11 = t3 - t2;
  return y[k] * h00 + h * m[k] * h10 + y[k + 1] * h01 + h * m[k + 1] * h11;
}

double AnnealSchedule::eval_derivative(double s, const std::vector<double>& y,
                                       const std::vector<double>& m) const {
  const std::size_t k = interval(s);
  const double h = s_[k + 1] - s_[k];
  const double t = (s - s_[k]) / h;
  const double t2 = t * t;
  const double d00 = 6.0 * t2 - 6.0 * t;
  const double d10 = 3.0 * t2 - 4.0 * t + 1.0;
  const double d01 = -6.0 * t2 + 6.0 * t;
  const double d11 = 3.0 * t2 - 2.0 * t;
  return (y[k] * d00 + y[k + 1] * d01) / h + m[k] * d10 + m[k + 1] * d11;
}

// ---------------------------------------------------------------------------

AnnealModel::AnnealModel(SpinSector sector, ProblemHamiltonian problem, AnnealSchedule schedule)
    : sector_(std::move(sector)), problem_(std::move(problem)), schedule_(std::move(schedule)) {
  if (problem_.n != sector_.n) throw std::invalid_argument("AnnealModel: qubit count mismatch");
  neg_sx_ = -sector_.sx_matrix();
  coupling_ = sector_.coupling_diagonal();
}

RMatrix AnnealModel::hamiltonian(double s) const {
  if (!(s >= 0.0 && s <= 1.0)) throw std::out_of_range("hamiltonian: s outside [0, 1]");
  RMatrix h = schedule_.a(s) * neg_sx_;
  h.diagonal() += schedule_.b(s) * problem_.diagonal;
  return h;
}

RMatrix AnnealModel::hamiltonian_derivative(double s) const {
  if (!(s >= 0.0 && s <= 1.0)) throw std::out_of_range("hamiltonian_derivative: s outside [0, 1]");
  RMatrix h = schedule_.da(s) * neg_sx_;
  h.diagonal() += schedule_.db(s) * problem_.diagonal;
  return h;
}

RMatrix assemble_hq(const SpinSector& sector, const ProblemHamiltonian& problem,
                    const AnnealSchedule& schedule, double s) {
  if (!(s >= 0.0 && s <= 1.0)) throw std::out_of_range("assemble_hq: s outside [0, 1]");
  RMatrix h = -schedule.a(s) * sector.sx_matrix();
  h.diagonal() += schedule.b(s) * problem.diagonal;
  return h;
}

}  // namespace qapause
