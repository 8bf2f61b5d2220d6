#include <doctest.h>

#include <cmath>
#include <random>

#include "qapause/mcwf.hpp"
#include "qapause/rng.hpp"

using namespace qapause;

namespace {

AnnealModel small_model(int n, int p) {
  return AnnealModel(build_sector(n), build_problem(ProblemKind::PSpin, n, p), AnnealSchedule::linear());
}

Timeline ramp(double tau) { return Timeline{{Segment{0.0, tau, 0.0, 1.0}}}; }

CVector random_state(int d, unsigned seed) {
  std::mt19937 gen(seed);
  std::normal_distribution<double> g;
  CVector c(d);
  for (int k = 0; k < d; ++k) c(k) = cplx(g(gen), g(gen));
  return c / c.norm();
}

// Scalar-decay table: H_eff = diag(-i kappa / 2) on a d-dimensional space.
StepTable scalar_decay(int d, double kappa) {
  StepTable t;
  t.eig.energies = RVector::Zero(d);
  t.eig.vectors = RMatrix::Identity(d, d);
  t.lambda = CVector::Constant(d, cplx(0.0, -0.5 * kappa));
  t.decay = RVector::Constant(d, kappa);
  return t;
}

// Fourth-order Runge-Kutta Schroedinger integration in the computational basis.
double schrodinger_fidelity(const AnnealModel& model, double tau, int steps) {
  const int d = model.dim();
  Eigen::SelfAdjointEigenSolver<RMatrix> start(model.hamiltonian(0.0));
  CVector psi = start.eigenvectors().col(0).cast<cplx>();
  const double h = tau / steps;
  auto f = [&](double t, const CVector& y) -> CVector {
    return -kI * (model.hamiltonian(std::min(t / tau, 1.0)).cast<cplx>() * y);
  };
  for (int k = 0; k < steps; ++k) {
    const double t = k * h;
    const CVector k1 = f(t, psi);
    const CVector k2 = f(t + h / 2, psi + h / 2 * k1);
    const CVector k3 = f(t + h / 2, psi + h / 2 * k2);
    const CVector k4 = f(t + h, psi + h * k3);
    psi += h / 6 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  Eigen::SelfAdjointEigenSolver<RMatrix> end(model.hamiltonian(1.0));
  (void)d;
  return std::norm(end.eigenvectors().col(0).cast<cplx>().dot(psi));
}

}  // namespace

TEST_CASE("Philox4x32-10 known-answer vectors") {
  using B = Philox4x32::Block;
  CHECK(Philox4x32::encrypt(B{0, 0, 0, 0}, {0, 0}) == B{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(Philox4x32::encrypt(B{0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        B{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(Philox4x32::encrypt(B{0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        B{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("random streams are reproducible and independent") {
  RandomStream a(42, 7), b(42, 7), c(42, 8), d(43, 7);
  bool differs_index = false, differs_seed = false;
  double sum = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const double x = a.uniform();
    CHECK(x == b.uniform());
    differs_index |= x != c.uniform();
    differs_seed |= x != d.uniform();
    CHECK(x > 0.0);
    CHECK(x < 1.0);
    sum += x;
  }
  CHECK(differs_index);
  CHECK(differs_seed);
  CHECK(sum / 1000 == doctest::Approx(0.5).epsilon(0.05));
  CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
  CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 2));
}

TEST_CASE("timeline evaluation") {
  const Timeline tl{{Segment{0, 30, 0, 0.3}, Segment{30, 80, 0.3, 0.3}, Segment{80, 150, 0.3, 1.0}}};
  CHECK(tl.s_at(0) == 0.0);
  CHECK(tl.s_at(15) == doctest::Approx(0.15));
  CHECK(tl.s_at(55) == 0.3);
  CHECK(tl.s_at(150) == 1.0);
  CHECK_THROWS_AS(tl.s_at(-1e-9), std::out_of_range);
  CHECK_THROWS_AS(tl.s_at(150.001), std::out_of_range);
}

TEST_CASE("effective Hamiltonian") {
  const auto model = small_model(4, 3);
  const auto lamb = LambShiftTable(BathParams::make(1e-3, 1.57, 1000.0), 20.0, 0.05);

  SUBCASE("eta = 0 gives H_Q exactly") {
    const auto bath = BathParams::make(0.0, 1.57, 1000.0);
    for (double s : {0.0, 0.4, 1.0}) {
      const auto t = build_step_table(model, bath, lamb, s);
      const CMatrix heff = t.effective_hamiltonian();
      CHECK((heff - heff.adjoint()).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((heff - model.hamiltonian(s).cast<cplx>()).cwiseAbs().maxCoeff() < 1e-12);
      CHECK(t.decay.cwiseAbs().maxCoeff() == 0.0);
    }
  }

  SUBCASE("matches the channel-sum construction with a dissipative anti-Hermitian part") {
    const auto bath = BathParams::make(0.05, 1.57, 1000.0);
    for (double s : {0.1, 0.35, 0.7, 1.0}) {
      const auto t = build_step_table(model, bath, lamb, s);
      const CMatrix v = t.eig.vectors.cast<cplx>();
      CMatrix expected = model.hamiltonian(s).cast<cplx>();
      for (std::size_t k = 0; k < t.jumps.channels.size(); ++k) {
        const CMatrix l = v * t.jumps.channel_matrix(k).cast<cplx>() * v.adjoint();
        expected += cplx(t.shifts[k], -0.5 * t.rates[k]) * (l.adjoint() * l);
      }
      const CMatrix heff = t.effective_hamiltonian();
      CHECK((heff - expected).cwiseAbs().maxCoeff() < 1e-10);
      const CMatrix anti = (heff - heff.adjoint()) / cplx(0.0, 2.0);
      Eigen::SelfAdjointEigenSolver<CMatrix> es(anti);
      CHECK(es.eigenvalues().maxCoeff() <= 1e-12);
    }
  }

  SUBCASE("commuting limit at s = 1") {
    const auto bath = BathParams::make(1e-3, 1.57, 1000.0);
    const auto t = build_step_table(model, bath, lamb, 1.0);
    CHECK(t.normal);
    const RMatrix a = t.jumps.amplitudes;
    CHECK((a - RMatrix(a.diagonal().asDiagonal())).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((t.effective_hamiltonian() - CMatrix(t.effective_hamiltonian().diagonal().asDiagonal()))
              .cwiseAbs()
              .maxCoeff() < 1e-12);
  }
}

TEST_CASE("propagation and norm decay") {
  SUBCASE("scalar decay") {
    const double kappa = 0.37;
    const auto t = scalar_decay(3, kappa);
    const CVector c = random_state(3, 1);
    for (double dt : {0.0, 0.01, 0.5, 3.0}) {
      CHECK(t.propagate(c, dt).squaredNorm() == doctest::Approx(std::exp(-kappa * dt)).epsilon(1e-13));
      CHECK(t.norm_after(c, dt) == doctest::Approx(std::exp(-kappa * dt)).epsilon(1e-13));
    }
  }

  SUBCASE("unitary limit conserves the norm") {
    const auto model = small_model(5, 2);
    const auto bath = BathParams::make(0.0, 1.57, 1000.0);
    const auto t = build_step_table(model, bath, LambShiftTable(bath, 10.0, 0.1), 0.3);
    const CVector c = random_state(6, 2);
    CHECK(std::abs(t.propagate(c, 0.01).norm() - 1.0) < 1e-12);
    CHECK(std::abs(t.propagate(c, 100.0).norm() - 1.0) < 1e-12);
  }

  SUBCASE("norm is monotone and the dense path agrees with the diagonal path") {
    const auto model = small_model(4, 2);
    const auto bath = BathParams::make(0.02, 1.57, 1000.0);
    const auto table = build_step_table(model, bath, LambShiftTable(bath, 20.0, 0.05), 0.45);
    REQUIRE(table.normal);
    StepTable dense = table;
    dense.normal = false;
    dense.generator = CMatrix(table.lambda.asDiagonal());
    const CVector c = random_state(5, 3);
    double previous = 1.0;
    for (int k = 1; k <= 200; ++k) {
      const double t = 0.25 * k;
      const double norm = table.norm_after(c, t);
      CHECK(norm <= previous + 1e-15);
      previous = norm;
      if (k % 20 == 0) {
        CHECK((table.propagate(c, t) - dense.propagate(c, t)).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(dense.norm_after(c, t) == doctest::Approx(norm).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("waiting-time search") {
  const double kappa = 0.8;
  const auto t = scalar_decay(2, kappa);
  const CVector c = random_state(2, 4);
  for (double r : {0.9, 0.5, 0.2}) {
    const auto hit = find_jump_time(t, c, 10.0, r);
    REQUIRE(hit.has_value());
    CHECK(*hit == doctest::Approx(std::log(1.0 / r) / kappa).epsilon(1e-9));
    CHECK(std::abs(t.norm_after(c, *hit) - r) < 1e-10);
  }
  CHECK_FALSE(find_jump_time(t, c, 0.1, 0.5).has_value());
  CHECK_FALSE(find_jump_time(scalar_decay(2, 0.0), c, 1e3, 1e-6).has_value());
}

TEST_CASE("jump selection") {
  CHECK(select_jump({1.0, 3.0}, 0.2) == 0);
  CHECK(select_jump({1.0, 3.0}, 0.3) == 1);
  CHECK(select_jump({1.0, 3.0}, 0.25) == 0);
  CHECK(select_jump({0.0, 2.0, 0.0}, 1e-12) == 1);
  CHECK(select_jump({0.0, 2.0, 0.0}, 1.0) == 1);
  CHECK_THROWS(select_jump({0.0, 0.0}, 0.5));
}

TEST_CASE("jump application") {
  const auto model = small_model(4, 3);
  const auto bath = BathParams::make(1e-3, 1.57, 1000.0);
  const auto t = build_step_table(model, bath, LambShiftTable(bath, 20.0, 0.05), 0.5);
  const int d = t.dim();

  SUBCASE("decay channel maps eps_b onto eps_a") {
    const auto alpha = static_cast<std::size_t>(t.jumps.channel_index(0, 2));
    REQUIRE(alpha != 0);
    const CVector out = apply_jump(t, CVector::Unit(d, 2), alpha);
    CHECK(std::abs(out(0)) == doctest::Approx(1.0));
    CHECK(out.norm() == doctest::Approx(1.0));
  }

  SUBCASE("dephasing keeps an eigenstate") {
    for (int b = 0; b < d; ++b) {
      if (std::abs(t.jumps.amplitudes(b, b)) < 1e-9) continue;
      const CVector out = apply_jump(t, CVector::Unit(d, b), 0);
      CHECK(std::abs(out(b)) == doctest::Approx(1.0));
    }
  }

  SUBCASE("dephasing a superposition weights by the diagonal amplitudes") {
    CVector c = CVector::Zero(d);
    c(0) = c(1) = 1.0 / std::sqrt(2.0);
    const CVector out = apply_jump(t, c, 0);
    const double d1 = t.jumps.amplitudes(0, 0), d2 = t.jumps.amplitudes(1, 1);
    const double norm = std::hypot(d1, d2);
    CHECK(out(0).real() == doctest::Approx(d1 / norm));
    CHECK(out(1).real() == doctest::Approx(d2 / norm));
    CHECK(out.tail(d - 2).norm() == doctest::Approx(0.0));
  }

  SUBCASE("zero-norm jump is rejected") {
    const auto alpha = static_cast<std::size_t>(t.jumps.channel_index(0, 2));
    CHECK_THROWS(apply_jump(t, CVector::Unit(d, 0), alpha));
  }
}

TEST_CASE("Monte Carlo estimates") {
  const auto e = estimate({0.0, 1.0});
  CHECK(e.mean == 0.5);
  CHECK(e.error == doctest::Approx(0.5));
  const auto same = estimate({0.3, 0.3, 0.3});
  CHECK(same.mean == doctest::Approx(0.3));
  CHECK(same.error == 0.0);

  std::vector<TrajectoryRecord> recs(2);
  recs[0].rho11 = {1.0, 0.0};
  recs[1].rho11 = {1.0, 1.0};
  recs[0].final_eigen = {0.0, 1.0};
  recs[1].final_eigen = {1.0, 0.0};
  recs[0].final_weight = recs[1].final_weight = {0.5, 0.5};
  const auto r = average(recs, {0.0, 1.0}, {0.0, 1.0});
  CHECK(r.fidelity.mean == 0.5);
  CHECK(r.fidelity.error == doctest::Approx(0.5));
  CHECK(r.rho11[0].error == 0.0);
  recs[1].rho11 = {1.0};
  CHECK_THROWS_AS(average(recs, {0.0, 1.0}, {0.0, 1.0}), std::invalid_argument);
}

TEST_CASE("unitary trajectory matches Schroedinger integration") {
  const auto model = small_model(4, 3);
  const auto bath = BathParams::make(0.0, 1.57, 1000.0);
  const double tau = 10.0;
  const double reference = schrodinger_fidelity(model, tau, 20000);
  std::vector<double> errors;
  for (double dt : {0.02, 0.01, 0.005}) {
    EngineConfig cfg;
    cfg.dt = dt;
    McwfEngine engine(model, bath, ramp(tau), {0.0, tau}, cfg);
    const auto rec = engine.run_trajectory(1, 0);
    CHECK(rec.jumps == 0);
    CHECK(rec.final_state.norm() == doctest::Approx(1.0).epsilon(1e-12));
    errors.push_back(std::abs(rec.rho11.back() - reference));
  }
  CHECK(errors[2] < 1e-4);
  // second-order convergence in dt
  CHECK(errors[0] / errors[1] > 3.0);
  CHECK(errors[1] / errors[2] > 3.0);
}

TEST_CASE("trajectory determinism and worker independence") {
  const auto model = small_model(4, 3);
  const auto bath = BathParams::make(0.02, 1.57, 1000.0);
  EngineConfig cfg;
  cfg.keep_jump_logs = true;
  std::vector<double> samples{0.0, 2.5, 5.0, 7.5, 10.0};
  McwfEngine engine(model, bath, ramp(10.0), samples, cfg);

  const auto a = engine.run_trajectory(99, 3);
  const auto b = engine.run_trajectory(99, 3);
  REQUIRE(a.log.size() == b.log.size());
  for (std::size_t k = 0; k < a.log.size(); ++k) {
    CHECK(a.log[k].t == b.log[k].t);
    CHECK(a.log[k].alpha == b.log[k].alpha);
  }
  CHECK(a.rho11 == b.rho11);

  const auto serial = engine.run(99, 24, true);
  for (auto [workers, chunk] : {std::pair{3, 0}, std::pair{2, 5}, std::pair{1, 4}}) {
    EngineConfig c2 = cfg;
    c2.workers = workers;
    c2.chunk = chunk;
    const auto parallel = McwfEngine(model, bath, ramp(10.0), samples, c2).run(99, 24, true);
    REQUIRE(parallel.records.size() == serial.records.size());
    for (std::size_t k = 0; k < serial.records.size(); ++k) {
      CHECK(parallel.records[k].rho11 == serial.records[k].rho11);
      CHECK(parallel.records[k].jumps == serial.records[k].jumps);
    }
    CHECK(parallel.fidelity.mean == serial.fidelity.mean);
  }
  CHECK(serial.mean_jumps > 0.0);
  const auto other = engine.run(100, 24);
  CHECK(other.fidelity.mean != serial.fidelity.mean);
}

TEST_CASE("hold segments and sample breakpoints") {
  const auto model = small_model(4, 3);
  const auto bath = BathParams::make(0.0, 1.57, 1000.0);
  const Timeline paused{{Segment{0, 6, 0, 0.6}, Segment{6, 26, 0.6, 0.6}, Segment{26, 30, 0.6, 1.0}}};
  McwfEngine with_pause(model, bath, paused, {0.0, 6.0, 16.0, 26.0, 30.0});
  const auto s = with_pause.sample_s();
  CHECK(s[1] == doctest::Approx(0.6));
  CHECK(s[2] == doctest::Approx(0.6));
  const auto rec = with_pause.run_trajectory(1, 0);
  // holding at fixed H conserves eigenpopulations in the unitary limit
  CHECK(rec.rho11[1] == doctest::Approx(rec.rho11[2]).epsilon(1e-10));
  CHECK(rec.rho11[2] == doctest::Approx(rec.rho11[3]).epsilon(1e-10));
  CHECK_THROWS(McwfEngine(model, bath, paused, {0.0, 40.0}));
}
