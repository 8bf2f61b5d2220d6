#include "qapause/mcwf.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include "qapause/rng.hpp"

namespace qapause {

// ---------------------------------------------------------------------------
// Timeline

double Segment::s_at(double t) const {
  if (hold() || t1 == t0) return s0;
  const double u = std::clamp((t - t0) / (t1 - t0), 0.0, 1.0);
  return s0 + u * (s1 - s0);
}

double Timeline::s_at(double t) const {
  if (segments.empty() || t < segments.front().t0 || t > end_time()) {
    std::ostringstream msg;
    msg << "timeline: t=" << t << " outside [0, " << end_time() << "]";
    throw std::out_of_range(msg.str());
  }
  for (const auto& seg : segments) {
    if (t <= seg.t1) return seg.s_at(t);
  }
  return segments.back().s1;
}

// ---------------------------------------------------------------------------
// Step tables

StepTable build_step_table(const AnnealModel& model, const BathParams& bath, const LambShiftTable& lamb,
                           double s, const EngineConfig& cfg) {
  StepTable t;
  t.s = s;
  t.eig = eigendecompose(model.hamiltonian(s), nullptr, s);
  t.jumps = build_jump_table(t.eig, model.coupling(), cfg.grouping_tol);
  const std::size_t channels = t.jumps.channels.size();
  t.rates.assign(channels, 0.0);
  t.shifts.assign(channels, 0.0);
  if (bath.eta > 0.0) {
    for (std::size_t k = 0; k < channels; ++k) {
      const double w = t.jumps.channels[k].omega;
      t.rates[k] = gamma(w, bath);
      if (cfg.lamb_shift) t.shifts[k] = lamb(w);
    }
  }

  // H_eff is diagonal in the eigenbasis unless some channel maps two different
  // levels onto the same target, which needs a degenerate pair.
  for (const auto& ch : t.jumps.channels) {
    for (std::size_t i = 0; i < ch.transitions.size() && t.normal; ++i) {
      for (std::size_t j = i + 1; j < ch.transitions.size(); ++j) {
        if (ch.transitions[i].a == ch.transitions[j].a && ch.transitions[i].b != ch.transitions[j].b) {
          t.normal = false;
          break;
        }
      }
    }
  }

  const int d = t.dim();
  if (t.normal) {
    RVector shift = RVector::Zero(d);
    t.decay = RVector::Zero(d);
    for (std::size_t k = 0; k < channels; ++k) {
      for (const auto& tr : t.jumps.channels[k].transitions) {
        const double a2 = tr.amplitude * tr.amplitude;
        t.decay(tr.b) += t.rates[k] * a2;
        shift(tr.b) += t.shifts[k] * a2;
      }
    }
    t.lambda.resize(d);
    for (int b = 0; b < d; ++b) t.lambda(b) = cplx(t.eig.energies(b) + shift(b), -0.5 * t.decay(b));
  } else {
    t.generator = CMatrix::Zero(d, d);
    t.generator.diagonal() = t.eig.energies.cast<cplx>();
    for (std::size_t k = 0; k < channels; ++k) {
      const cplx weight(t.shifts[k], -0.5 * t.rates[k]);
      const auto& tr = t.jumps.channels[k].transitions;
      for (const auto& x : tr) {
        for (const auto& y : tr) {
          if (x.a == y.a) t.generator(x.b, y.b) += weight * x.amplitude * y.amplitude;
        }
      }
    }
  }
  return t;
}

CVector StepTable::propagate(const CVector& c, double t) const {
  if (normal) {
    CVector out(c.size());
    for (Eigen::Index a = 0; a < c.size(); ++a) out(a) = std::exp(-kI * lambda(a) * t) * c(a);
    return out;
  }
  return expm(CMatrix(-kI * t * generator)) * c;
}

double StepTable::norm_after(const CVector& c, double t) const {
  if (normal) {
    double sum = 0.0;
    for (Eigen::Index a = 0; a < c.size(); ++a) sum += std::norm(c(a)) * std::exp(-decay(a) * t);
    return sum;
  }
  return propagate(c, t).squaredNorm();
}

CMatrix StepTable::effective_hamiltonian() const {
  const CMatrix v = eig.vectors.cast<cplx>();
  if (normal) return v * lambda.asDiagonal() * v.transpose();
  return v * generator * v.transpose();
}

namespace {

// sum over one channel's transitions of A_t c_b into slot a, then |.|^2 summed
double channel_weight(const JumpChannel& ch, const CVector& c, CVector& scratch) {
  if (ch.transitions.size() == 1) {
    const auto& t = ch.transitions.front();
    return t.amplitude * t.amplitude * std::norm(c(t.b));
  }
  for (const auto& t : ch.transitions) scratch(t.a) = 0.0;
  for (const auto& t : ch.transitions) scratch(t.a) += t.amplitude * c(t.b);
  double sum = 0.0;
  for (const auto& t : ch.transitions) {
    sum += std::norm(scratch(t.a));
    scratch(t.a) = 0.0;
  }
  return sum;
}

}  // namespace

std::vector<double> StepTable::jump_weights(const CVector& c) const {
  std::vector<double> w(jumps.channels.size(), 0.0);
  CVector scratch = CVector::Zero(c.size());
  for (std::size_t k = 0; k < w.size(); ++k) {
    if (rates[k] > 0.0) w[k] = rates[k] * channel_weight(jumps.channels[k], c, scratch);
  }
  return w;
}

std::optional<double> find_jump_time(const StepTable& table, const CVector& c, double duration, double r,
                                     double tol) {
  const double start = c.squaredNorm();
  if (start <= r) return 0.0;
  const double end = table.norm_after(c, duration);
  if (end > r + tol) return std::nullopt;
  if (end > r) return duration;
  double lo = 0.0;
  double hi = duration;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double f = table.norm_after(c, mid) - r;
    if (std::abs(f) < tol) return mid;
    (f > 0.0 ? lo : hi) = mid;
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * duration) break;
  }
  return 0.5 * (lo + hi);
}

std::size_t select_jump(const std::vector<double>& weights, double mu) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw std::runtime_error("select_jump: all jump weights vanish");
  double cumulative = 0.0;
  std::size_t last = 0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (weights[k] <= 0.0) continue;
    cumulative += weights[k] / total;
    last = k;
    if (cumulative >= mu) return k;
  }
  return last;  // rounding left the cumulative sum a hair below mu
}

CVector apply_jump(const StepTable& table, const CVector& c, std::size_t alpha) {
  CVector out = CVector::Zero(c.size());
  for (const auto& t : table.jumps.channels.at(alpha).transitions) out(t.a) += t.amplitude * c(t.b);
  const double norm = out.norm();
  if (!(norm > 0.0)) throw std::runtime_error("apply_jump: zero-norm post-jump state");
  return out / norm;
}

// ---------------------------------------------------------------------------
// Averaging

Estimate estimate(const std::vector<double>& values) {
  Estimate e;
  const auto m = static_cast<double>(values.size());
  if (values.empty()) return e;
  for (double v : values) e.mean += v;
  e.mean /= m;
  if (values.size() < 2) return e;
  double ss = 0.0;
  for (double v : values) ss += (v - e.mean) * (v - e.mean);
  e.error = std::sqrt(ss / (m * (m - 1.0)));
  return e;
}

RunResult average(std::vector<TrajectoryRecord> records, const std::vector<double>& times,
                  const std::vector<double>& s, bool keep_records) {
  RunResult out;
  out.times = times;
  out.s = s;
  out.trajectories = records.size();
  if (records.empty()) return out;
  const std::size_t samples = records.front().rho11.size();
  const std::size_t levels = records.front().final_eigen.size();
  if (samples != times.size() || samples != s.size()) {
    throw std::invalid_argument("average: sample grid does not match the records");
  }
  for (const auto& r : records) {
    if (r.rho11.size() != samples || r.final_eigen.size() != levels || r.final_weight.size() != levels) {
      throw std::invalid_argument("average: mismatched record shapes");
    }
  }
  std::vector<double> column(records.size());
  auto collect = [&](auto pick) {
    for (std::size_t m = 0; m < records.size(); ++m) column[m] = pick(records[m]);
    return estimate(column);
  };
  for (std::size_t k = 0; k < samples; ++k) out.rho11.push_back(collect([k](const auto& r) { return r.rho11[k]; }));
  for (std::size_t a = 0; a < levels; ++a) {
    out.final_eigen.push_back(collect([a](const auto& r) { return r.final_eigen[a]; }));
    out.final_weight.push_back(collect([a](const auto& r) { return r.final_weight[a]; }));
  }
  out.fidelity = out.final_eigen.front();
  double jumps = 0.0;
  for (const auto& r : records) {
    jumps += static_cast<double>(r.jumps);
    out.max_jumps = std::max(out.max_jumps, r.jumps);
  }
  out.mean_jumps = jumps / static_cast<double>(records.size());
  if (keep_records) out.records = std::move(records);
  return out;
}

// ---------------------------------------------------------------------------
// Engine

std::shared_ptr<const LambShiftTable> make_lamb_table(const AnnealModel& model, const BathParams& bath) {
  double width = 0.0;
  for (int k = 0; k <= 100; ++k) {
    const auto eig = eigendecompose(model.hamiltonian(k / 100.0));
    width = std::max(width, eig.energies(eig.dim() - 1) - eig.energies(0));
  }
  return std::make_shared<const LambShiftTable>(bath, 1.1 * width + 1.0);
}

McwfEngine::McwfEngine(const AnnealModel& model, const BathParams& bath, Timeline timeline,
                       std::vector<double> sample_times, EngineConfig cfg,
                       std::shared_ptr<const LambShiftTable> lamb)
    : model_(model), bath_(bath), timeline_(std::move(timeline)), samples_(std::move(sample_times)),
      cfg_(cfg), lamb_(std::move(lamb)) {
  if (timeline_.segments.empty()) throw std::invalid_argument("McwfEngine: empty timeline");
  if (!(cfg_.dt > 0.0)) throw std::invalid_argument("McwfEngine: dt must be positive");
  const double t_end = timeline_.end_time();
  if (samples_.size() < 2 || samples_.front() != timeline_.segments.front().t0 || samples_.back() != t_end ||
      !std::is_sorted(samples_.begin(), samples_.end())) {
    throw std::invalid_argument("McwfEngine: sample times must be sorted and include both endpoints");
  }
  samples_.erase(std::unique(samples_.begin(), samples_.end()), samples_.end());
  if (!lamb_) {
    lamb_ = (bath_.eta > 0.0 && cfg_.lamb_shift) ? make_lamb_table(model_, bath_)
                                                  : std::make_shared<const LambShiftTable>();
  }

  // Steps never straddle a segment boundary or a sample time.
  std::size_t next_sample = 1;
  for (const auto& seg : timeline_.segments) {
    if (seg.t1 < seg.t0) throw std::invalid_argument("McwfEngine: segment runs backwards");
    if (seg.t1 == seg.t0) continue;
    std::vector<double> cuts = {seg.t0};
    for (double t : samples_) {
      if (t > seg.t0 && t < seg.t1) cuts.push_back(t);
    }
    cuts.push_back(seg.t1);
    int table = -1;
    if (seg.hold()) {
      hold_tables_.push_back(build_step_table(model_, bath_, *lamb_, seg.s0, cfg_));
      table = static_cast<int>(hold_tables_.size()) - 1;
    }
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
      const double u0 = cuts[k], u1 = cuts[k + 1];
      const int pieces = seg.hold() ? 1 : std::max(1, static_cast<int>(std::ceil((u1 - u0) / cfg_.dt - 1e-9)));
      for (int j = 0; j < pieces; ++j) {
        const double a = u0 + (u1 - u0) * j / pieces;
        const double b = j + 1 == pieces ? u1 : u0 + (u1 - u0) * (j + 1) / pieces;
        int sample = -1;
        if (j + 1 == pieces && next_sample < samples_.size() && samples_[next_sample] == u1) {
          sample = static_cast<int>(next_sample++);
        }
        steps_.push_back({a, b, seg.s_at(0.5 * (a + b)), table, sample});
      }
    }
  }
  if (next_sample != samples_.size()) throw std::logic_error("McwfEngine: sample times not aligned with steps");

  for (double t : samples_) {
    const auto eig = eigendecompose(model_.hamiltonian(timeline_.s_at(t)));
    sample_ground_.push_back(eig.vectors.col(0));
  }
  final_eig_ = eigendecompose(model_.hamiltonian(timeline_.s_at(t_end)));
  initial_ground_ = eigendecompose(model_.hamiltonian(timeline_.s_at(samples_.front()))).vectors.col(0);
}

std::vector<double> McwfEngine::sample_s() const {
  std::vector<double> out;
  for (double t : samples_) out.push_back(timeline_.s_at(t));
  return out;
}

namespace {

struct Walker {
  CVector c;  // coordinates in the basis of the current table
  double r{1.0};
  RandomStream rng;
  TrajectoryRecord* rec;
};

}  // namespace

void McwfEngine::run_chunk(std::uint64_t seed, std::uint64_t first, std::size_t count,
                           TrajectoryRecord* out) const {
  const int d = model_.dim();
  std::vector<Walker> walkers;
  walkers.reserve(count);
  for (std::size_t j = 0; j < count; ++j) {
    Walker w{initial_ground_.cast<cplx>(), 1.0, RandomStream(seed, first + j), out + j};
    w.r = w.rng.uniform();
    w.rec->rho11.assign(samples_.size(), 0.0);
    w.rec->rho11[0] = 1.0;
    walkers.push_back(std::move(w));
  }

  RMatrix basis = RMatrix::Identity(d, d);  // columns of the current coordinate basis
  StepTable fresh;
  CVector phase(d);
  RVector damping(d);
  CMatrix full_step;
  double cached_duration = -1.0;
  const StepTable* cached_table = nullptr;

  for (const auto& step : steps_) {
    const StepTable* table = nullptr;
    if (step.table >= 0) {
      table = &hold_tables_[static_cast<std::size_t>(step.table)];
    } else {
      fresh = build_step_table(model_, bath_, *lamb_, step.s, cfg_);
      table = &fresh;
      cached_table = nullptr;
    }
    const RMatrix overlap = table->eig.vectors.transpose() * basis;
    basis = table->eig.vectors;

    const double duration = step.t1 - step.t0;
    if (table != cached_table || duration != cached_duration) {
      if (table->normal) {
        for (int a = 0; a < d; ++a) {
          phase(a) = std::exp(-kI * table->lambda(a) * duration);
          damping(a) = std::exp(-table->decay(a) * duration);
        }
      } else {
        full_step = expm(CMatrix(-kI * duration * table->generator));
      }
      cached_table = table;
      cached_duration = duration;
    }

    for (auto& w : walkers) {
      CVector c = overlap * w.c;
      double end_norm = 0.0;
      CVector evolved;
      if (table->normal) {
        for (int a = 0; a < d; ++a) end_norm += std::norm(c(a)) * damping(a);
      } else {
        evolved = full_step * c;
        end_norm = evolved.squaredNorm();
      }
      if (end_norm > w.r + cfg_.bisection_tol) {
        w.c = table->normal ? CVector(phase.cwiseProduct(c)) : evolved;
        continue;
      }
      double t = step.t0;
      double remaining = duration;
      while (true) {
        const auto hit = find_jump_time(*table, c, remaining, w.r, cfg_.bisection_tol);
        if (!hit) {
          c = table->propagate(c, remaining);
          break;
        }
        c = table->propagate(c, *hit);
        t += *hit;
        remaining -= *hit;
        const auto alpha = select_jump(table->jump_weights(c), w.rng.uniform());
        c = apply_jump(*table, c, alpha);
        w.r = w.rng.uniform();
        ++w.rec->jumps;
        if (cfg_.keep_jump_logs) w.rec->log.push_back({t, alpha, table->jumps.channels[alpha].omega});
        if (remaining <= 0.0) break;
      }
      w.c = std::move(c);
    }

    if (step.sample >= 0) {
      const CVector ground = (basis.transpose() * sample_ground_[static_cast<std::size_t>(step.sample)]).cast<cplx>();
      for (auto& w : walkers) {
        w.rec->rho11[static_cast<std::size_t>(step.sample)] = std::norm(ground.dot(w.c)) / w.c.squaredNorm();
      }
    }
  }

  for (auto& w : walkers) {
    CVector psi = basis.cast<cplx>() * w.c;
    psi /= psi.norm();
    const CVector eigen = final_eig_.vectors.transpose().cast<cplx>() * psi;
    w.rec->final_eigen.resize(static_cast<std::size_t>(d));
    w.rec->final_weight.resize(static_cast<std::size_t>(d));
    for (int a = 0; a < d; ++a) {
      w.rec->final_eigen[static_cast<std::size_t>(a)] = std::norm(eigen(a));
      w.rec->final_weight[static_cast<std::size_t>(a)] = std::norm(psi(a));
    }
    w.rec->final_state = std::move(psi);
  }
}

TrajectoryRecord McwfEngine::run_trajectory(std::uint64_t seed, std::uint64_t index) const {
  TrajectoryRecord rec;
  run_chunk(seed, index, 1, &rec);
  return rec;
}

RunResult McwfEngine::run(std::uint64_t seed, std::size_t count, bool keep_records,
                          const std::function<void(std::size_t)>& progress) const {
  std::vector<TrajectoryRecord> records(count);
  const std::size_t workers = static_cast<std::size_t>(std::max(1, cfg_.workers));
  const std::size_t chunk =
      cfg_.chunk > 0 ? static_cast<std::size_t>(cfg_.chunk) : std::max<std::size_t>(1, (count + workers - 1) / workers);
  const std::size_t chunks = (count + chunk - 1) / chunk;

  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  std::mutex report;
  std::exception_ptr failure;
  auto work = [&] {
    while (true) {
      const std::size_t k = next.fetch_add(1);
      if (k >= chunks) return;
      const std::size_t first = k * chunk;
      const std::size_t size = std::min(chunk, count - first);
      try {
        run_chunk(seed, first, size, records.data() + first);
      } catch (...) {
        std::lock_guard lock(report);
        if (!failure) failure = std::current_exception();
        next = chunks;
        return;
      }
      const std::size_t finished = done.fetch_add(size) + size;
      if (progress) {
        std::lock_guard lock(report);
        progress(finished);
      }
    }
  };
  const std::size_t threads = std::min(workers, chunks);
  if (threads <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t k = 0; k < threads; ++k) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);
  return average(std::move(records), samples_, sample_s(), keep_records);
}

}  // namespace qapause
