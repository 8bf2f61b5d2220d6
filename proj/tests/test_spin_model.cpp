#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "brute_force.hpp"
#include "qapause/spin_model.hpp"

using namespace qapause;

TEST_CASE("sector operators match the projected full register") {
  for (int n = 1; n <= 8; ++n) {
    const auto sector = build_sector(n);
    const auto dicke = brute::dicke_basis(n);
    const RMatrix sx = dicke.transpose() * brute::total_sx(n) * dicke;
    const RMatrix sz = brute::project_diagonal(dicke, 0.5 * brute::total_sigma_z(n));
    CHECK((sector.sx_matrix() - sx).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((sector.sz_matrix() - sz).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("Casimir identity holds in the sector") {
  for (int n : {1, 2, 5, 20, 64}) {
    const auto sector = build_sector(n);
    const RMatrix sx = sector.sx_matrix();
    const RMatrix y = sector.sy_imag_matrix();
    const RMatrix sz = sector.sz_matrix();
    // S_y = i Y, so S_y^2 = -Y^2
    const RMatrix casimir = sx * sx - y * y + sz * sz;
    const double s = sector.spin();
    const RMatrix expected = s * (s + 1.0) * RMatrix::Identity(sector.dim(), sector.dim());
    CHECK((casimir - expected).cwiseAbs().maxCoeff() < 1e-9 * (1.0 + s * s));
  }
}

TEST_CASE("p-spin energies match the projected brute-force diagonal") {
  for (int n = 1; n <= 10; ++n) {
    const auto dicke = brute::dicke_basis(n);
    for (int p : {2, 3, 7}) {
      const RMatrix projected = brute::project_diagonal(dicke, brute::pspin_diagonal(n, p));
      double err = 0.0;
      for (int w = 0; w <= n; ++w) err = std::max(err, std::abs(projected(w, w) - pspin_energy(n, p, w)));
      CHECK(err < 1e-10);
    }
  }
}

TEST_CASE("problem Hamiltonians") {
  SUBCASE("p-spin ground state is w = 0 with energy -n/2") {
    const auto h = build_problem(ProblemKind::PSpin, 20, 19);
    Eigen::Index arg = 0;
    CHECK(h.diagonal.minCoeff(&arg) == doctest::Approx(-10.0));
    CHECK(arg == 0);
  }
  SUBCASE("search marks only w = 0") {
    const auto h = build_problem(ProblemKind::Search, 6);
    CHECK(h.diagonal(0) == doctest::Approx(-3.0));
    for (int w = 1; w <= 6; ++w) CHECK(h.diagonal(w) == 0.0);
  }
  SUBCASE("argument validation") {
    CHECK_THROWS_AS(build_sector(0), std::invalid_argument);
    CHECK_THROWS_AS(build_sector(kMaxQubits + 1), std::invalid_argument);
    CHECK_THROWS(build_problem(ProblemKind::PSpin, 4));
    CHECK_THROWS(build_problem(ProblemKind::PSpin, 4, 0));
    CHECK(parse_problem_kind("search") == ProblemKind::Search);
    CHECK_THROWS(parse_problem_kind("maxcut"));
  }
}

TEST_CASE("schedule interpolation reproduces nodes and preserves monotonicity") {
  std::vector<ScheduleSample> samples;
  for (int k = 0; k <= 20; ++k) {
    const double s = k / 20.0;
    samples.push_back({s, 10.0 * std::exp(-5.0 * s), 0.01 + 9.0 * s * s});
  }
  const auto sched = AnnealSchedule::from_samples(samples);
  for (const auto& x : samples) {
    CHECK(sched.a(x.s) == x.a);
    CHECK(sched.b(x.s) == x.b);
  }
  double prev_a = sched.a(0.0), prev_b = sched.b(0.0);
  for (int k = 1; k <= 4000; ++k) {
    const double s = k / 4000.0;
    CHECK(sched.a(s) <= prev_a + 1e-14);
    CHECK(sched.b(s) >= prev_b - 1e-14);
    CHECK(sched.da(s) <= 1e-12);
    CHECK(sched.db(s) >= -1e-12);
    prev_a = sched.a(s);
    prev_b = sched.b(s);
  }
  // derivative agrees with a central difference away from nodes
  const double s = 0.3712, eps = 1e-6;
  CHECK(sched.da(s) == doctest::Approx((sched.a(s + eps) - sched.a(s - eps)) / (2 * eps)).epsilon(1e-6));
}

TEST_CASE("schedule validation names the offending row") {
  auto bad = [](std::vector<ScheduleSample> v) { return AnnealSchedule::from_samples(std::move(v)); };
  CHECK_THROWS_AS(bad({{0.0, 1.0, 0.0}, {0.5, 1.2, 0.5}, {1.0, 0.0, 1.0}}), ScheduleError);
  CHECK_THROWS_AS(bad({{0.0, 1.0, 0.0}, {0.5, 0.5, 0.5}, {0.9, 0.0, 1.0}}), ScheduleError);
  CHECK_THROWS_AS(bad({{0.0, 1.0, 0.5}, {1.0, 0.0, 1.0}}), ScheduleError);
  CHECK_THROWS_AS(bad({{0.0, 1.0, 0.0}, {0.0, 0.5, 0.5}, {1.0, 0.0, 1.0}}), ScheduleError);
  try {
    bad({{0.0, 1.0, 0.0}, {0.5, 1.2, 0.5}, {1.0, 0.0, 1.0}});
  } catch (const ScheduleError& e) {
    CHECK(std::string(e.what()).find("row") != std::string::npos);
  }
}

TEST_CASE("schedule CSV loading") {
  const auto dir = std::filesystem::temp_directory_path() / "qapause_sched_test";
  std::filesystem::create_directories(dir);
  const auto good = dir / "good.csv";
  std::ofstream(good) << "# comment\ns,A,B\n0,1,0\n0.5,0.5,0.5\n1,0,1\n";
  const auto sched = AnnealSchedule::load(good);
  CHECK(sched.samples().size() == 3);
  CHECK(sched.a(0.25) == doctest::Approx(0.75));
  CHECK(sched.content_hash() != 0);

  const auto bad_header = dir / "bad_header.csv";
  std::ofstream(bad_header) << "s,B,A\n0,1,0\n1,0,1\n";
  CHECK_THROWS_AS(AnnealSchedule::load(bad_header), ScheduleError);
  const auto bad_field = dir / "bad_field.csv";
  std::ofstream(bad_field) << "s,A,B\n0,1,0\n0.5,x,0.5\n1,0,1\n";
  CHECK_THROWS_AS(AnnealSchedule::load(bad_field), ScheduleError);
  CHECK_THROWS_AS(AnnealSchedule::load(dir / "missing.csv"), ScheduleError);
}

TEST_CASE("Hamiltonian assembly") {
  const AnnealModel model(build_sector(4), build_problem(ProblemKind::PSpin, 4, 3), AnnealSchedule::linear());
  const RMatrix h = model.hamiltonian(0.3);
  CHECK((h - h.transpose()).cwiseAbs().maxCoeff() == 0.0);
  const RMatrix expected = -0.7 * model.sector().sx_matrix() +
                           RMatrix(0.3 * model.problem().diagonal.asDiagonal());
  CHECK((h - expected).cwiseAbs().maxCoeff() < 1e-13);
  CHECK_THROWS_AS(model.hamiltonian(1.5), std::out_of_range);
  const double eps = 1e-6;
  const RMatrix fd = (model.hamiltonian(0.3 + eps) - model.hamiltonian(0.3 - eps)) / (2 * eps);
  CHECK((model.hamiltonian_derivative(0.3) - fd).cwiseAbs().maxCoeff() < 1e-7);
}
