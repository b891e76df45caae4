#include <doctest.h>

#include "etg/systems.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace etg;

namespace {

// Independent transcription of the kink transition, assembled differently
// from the library version as a guard against copy errors.
double kink_reference(double x) {
  const double sig = 1.0 / (1.0 + std::exp(-2.0 * x));
  double value = 0.8 + (x + 0.2) - 5.0 * (x + 0.2) * sig;
  if (x > 0.0) {
    value *= 1.0 - 0.5 * std::exp(-0.5 * x);
    value -= 0.5 * std::sin(8.0 * x);
  } else {
    value -= 0.5 * std::sin(2.0 * x);
  }
  return value;
}

}  // namespace

TEST_CASE("kink transition closed-form points") {
  CHECK(kink_f(0.0) == doctest::Approx(0.5).epsilon(1e-12));
  // oscillation amplitude stays at one half on the left branch
  for (double x = -6.0; x <= 0.0; x += 0.37) {
    const double kink_part =
        0.8 + (x + 0.2) * (1.0 - 5.0 / (1.0 + std::exp(-2.0 * x)));
    CHECK(std::abs(kink_f(x) - kink_part) <= 0.5 + 1e-12);
  }
  // printed branches make the slope modulation jump at zero
  const double eps = 1e-9;
  CHECK(kink_f(-eps) == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(kink_f(eps) == doctest::Approx(0.25).epsilon(1e-5));
}

TEST_CASE("kink matches an independently coded reference on a grid") {
  for (int i = 0; i <= 10000; ++i) {
    const double x = -5.0 + 10.0 * i / 10000.0;
    CHECK(std::abs(kink_f(x) - kink_reference(x)) < 1e-12);
  }
}

TEST_CASE("noiseless kink simulation iterates the transition") {
  SystemConfig sys;
  sys.kind = SystemKind::kink;
  sys.sigma_q2 = 0.0;
  sys.sigma_r2 = 0.0;
  sys.t_steps = 25;
  Dataset ds = simulate_kink(sys);
  double x = 0.5;
  for (int t = 0; t < 25; ++t) {
    x = kink_f(x);
    CHECK(ds.observations(t, 0) == doctest::Approx(x).epsilon(1e-14));
    CHECK((*ds.states)(t, 0) == doctest::Approx(x).epsilon(1e-14));
  }
}

TEST_CASE("kink simulation is seed-deterministic") {
  SystemConfig sys;
  sys.seed = 123;
  sys.t_steps = 50;
  Dataset a = simulate_kink(sys);
  Dataset b = simulate_kink(sys);
  CHECK((a.observations - b.observations).norm() == 0.0);
  CHECK((*a.states - *b.states).norm() == 0.0);
}

TEST_CASE("kink observation noise has the configured variance") {
  SystemConfig sys;
  sys.seed = 5;
  sys.t_steps = 10000;
  sys.sigma_r2 = 0.08;
  Dataset ds = simulate_kink(sys);
  const Matrix noise = ds.observations - *ds.states;
  const double var = noise.squaredNorm() / (noise.rows() - 1.0);
  CHECK(var == doctest::Approx(0.08).epsilon(0.05));
}

TEST_CASE("lorenz96 fixed point and trivial steps") {
  Vector x = Vector::Constant(6, 8.0);
  Vector next = lorenz96_step(x, 0.01, 8.0);
  CHECK((next - x).cwiseAbs().maxCoeff() < 1e-14);

  RngStream rng(6, "l96");
  Vector y = rng.gaussian_matrix(5, 1);
  CHECK((lorenz96_step(y, 0.0, 8.0) - y).norm() == 0.0);

  CHECK_THROWS_AS(lorenz96_step(Vector::Ones(3), 0.01, 8.0),
                  std::invalid_argument);
}

TEST_CASE("lorenz96 drift matches a per-coordinate hand computation") {
  RngStream rng(7, "l96h");
  Vector x = rng.gaussian_matrix(5, 1);
  const double dt = 0.013, f = 8.0;
  Vector next = lorenz96_step(x, dt, f);
  for (int i = 0; i < 5; ++i) {
    const double xp1 = x((i + 1) % 5);
    const double xm2 = x((i + 3) % 5);
    const double xm1 = x((i + 4) % 5);
    const double drift = (xp1 - xm2) * xm1 - x(i) + f;
    CHECK(next(i) == doctest::Approx(x(i) + dt * drift).epsilon(1e-14));
  }
}

TEST_CASE("lorenz96 drift is equivariant under cyclic rotation") {
  RngStream rng(8, "rot");
  for (int trial = 0; trial < 10; ++trial) {
    const int d = 5 + trial % 4;
    Vector x = rng.gaussian_matrix(d, 1);
    const int shift = 1 + trial % (d - 1);
    Vector rotated(d);
    for (int i = 0; i < d; ++i) rotated((i + shift) % d) = x(i);
    Vector a = lorenz96_step(rotated, 0.01, 8.0);
    Vector b = lorenz96_step(x, 0.01, 8.0);
    for (int i = 0; i < d; ++i) {
      CHECK(a((i + shift) % d) == doctest::Approx(b(i)).epsilon(1e-13));
    }
  }
}

TEST_CASE("lorenz96 observation error sits near the noise floor") {
  SystemConfig sys;
  sys.kind = SystemKind::lorenz96;
  sys.d_x = 8;
  sys.t_steps = 4000;
  sys.seed = 11;
  Dataset ds = simulate_lorenz96(sys);
  const double err = std::sqrt((ds.observations - *ds.states).squaredNorm() /
                               ds.observations.size());
  CHECK(err == doctest::Approx(2.0).epsilon(0.03));
}

TEST_CASE("zero forcing from the origin stays at the origin") {
  SystemConfig sys;
  sys.kind = SystemKind::lorenz96;
  sys.d_x = 5;
  sys.forcing = 0.0;
  sys.obs_var = 0.0;
  sys.t_steps = 20;
  sys.burn_in = 10;
  Dataset ds = simulate_lorenz96(sys);
  // x0 perturbation decays to zero under -x drift
  CHECK(ds.states->cwiseAbs().maxCoeff() < 0.02);
}

TEST_CASE("lorenz96 simulation is seed-deterministic") {
  SystemConfig sys;
  sys.kind = SystemKind::lorenz96;
  sys.d_x = 6;
  sys.t_steps = 30;
  sys.seed = 77;
  Dataset a = simulate_lorenz96(sys);
  Dataset b = simulate_lorenz96(sys);
  CHECK((a.observations - b.observations).norm() == 0.0);
}

TEST_CASE("csv round trip and parse failure diagnostics") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "etg_csv_test";
  fs::create_directories(dir);
  const fs::path path = dir / "ds.csv";

  SystemConfig sys;
  sys.t_steps = 40;
  sys.seed = 3;
  Dataset ds = simulate_kink(sys);
  write_csv(ds, path.string());
  Dataset back = load_csv(path.string());
  CHECK((back.observations - ds.observations).cwiseAbs().maxCoeff() < 1e-12);
  REQUIRE(back.states.has_value());
  CHECK((*back.states - *ds.states).cwiseAbs().maxCoeff() < 1e-12);

  {
    std::ofstream bad(dir / "bad.csv");
    bad << "y_0,x_0\n0.5,0.25\noops,1.0\n";
  }
  try {
    load_csv((dir / "bad.csv").string());
    FAIL("expected parse error");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("row 3") != std::string::npos);
    CHECK(msg.find("column 1") != std::string::npos);
  }
}

TEST_CASE("standardization uses training statistics and inverts exactly") {
  RngStream rng(9, "std");
  Dataset ds;
  ds.observations = rng.gaussian_matrix(100, 3);
  ds.observations.col(1).array() = ds.observations.col(1).array() * 4.0 + 10.0;
  ds.stats = Standardization::identity(3);
  ds.split_index = 100;
  const Matrix raw = ds.observations;
  split_standardize(ds, 0.5);
  CHECK(ds.split_index == 50);

  const Matrix train = ds.observations.topRows(50);
  for (int j = 0; j < 3; ++j) {
    CHECK(std::abs(train.col(j).mean()) < 1e-10);
    const double sd = std::sqrt(train.col(j).squaredNorm() / 49.0);
    CHECK(sd == doctest::Approx(1.0).epsilon(1e-10));
  }
  CHECK((ds.stats.invert(ds.observations) - raw).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("constant observation column trips the zero-variance guard") {
  Dataset ds;
  ds.observations = Matrix::Constant(20, 1, 3.5);
  ds.stats = Standardization::identity(1);
  ds.split_index = 20;
  split_standardize(ds, 0.5);
  // values centered, scale left alone
  CHECK(ds.observations.cwiseAbs().maxCoeff() < 1e-12);
  CHECK(ds.stats.std(0) == 1.0);
}
