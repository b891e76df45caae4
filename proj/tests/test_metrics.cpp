#include <doctest.h>

#include "etg/metrics.hpp"

#include <cmath>

using namespace etg;

TEST_CASE("rmse basics and loop oracle") {
  RngStream rng(50, "rmse");
  Matrix truth = rng.gaussian_matrix(7, 3);
  CHECK(rmse(truth, truth) == 0.0);
  CHECK(rmse(truth.array() + 2.0, truth) == doctest::Approx(2.0).epsilon(1e-12));

  Matrix est = rng.gaussian_matrix(7, 3);
  double acc = 0.0;
  for (int i = 0; i < 7; ++i) {
    for (int j = 0; j < 3; ++j) acc += std::pow(est(i, j) - truth(i, j), 2);
  }
  CHECK(rmse(est, truth) == doctest::Approx(std::sqrt(acc / 21.0)).epsilon(1e-12));
  CHECK_THROWS(rmse(est, truth.topRows(3)));
}

TEST_CASE("spread closed forms and monte carlo") {
  std::vector<Matrix> degenerate(4, Matrix::Constant(6, 2, 1.0));
  CHECK(spread(degenerate) == 0.0);

  Matrix two(2, 1);
  two << 0.0, 2.0;
  CHECK(spread({two}) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));

  // gaussian ensembles with known covariance
  RngStream rng(51, "spread");
  Matrix sigma(2, 2);
  sigma << 2.0, 0.3, 0.3, 0.5;
  const Matrix l = sigma.llt().matrixL();
  std::vector<Matrix> ens;
  for (int t = 0; t < 10; ++t) {
    Matrix e = rng.gaussian_matrix(20000, 2) * l.transpose();
    ens.push_back(e);
  }
  const double expect = std::sqrt(sigma.trace() / 2.0);
  CHECK(spread(ens) == doctest::Approx(expect).epsilon(0.01));
}

TEST_CASE("coverage limits and calibration") {
  Matrix members(5, 1);
  members << 1.0, 2.0, 3.0, 4.0, 5.0;
  Matrix truth_mid(1, 1);
  truth_mid << 3.0;
  CHECK(coverage({members}, truth_mid) == 1.0);
  Matrix truth_out(1, 1);
  truth_out << 50.0;
  CHECK(coverage({members}, truth_out) == 0.0);

  RngStream rng(52, "cov");
  const int t_steps = 20000;
  std::vector<Matrix> ens;
  Matrix truth(t_steps, 1);
  for (int t = 0; t < t_steps; ++t) {
    ens.push_back(rng.gaussian_matrix(400, 1));
    truth(t, 0) = rng.gaussian();
  }
  CHECK(coverage(ens, truth) == doctest::Approx(0.95).epsilon(0.01));
}

TEST_CASE("coverage is monotone in the interval level") {
  RngStream rng(53, "covm");
  std::vector<Matrix> ens;
  Matrix truth(500, 2);
  for (int t = 0; t < 500; ++t) {
    ens.push_back(rng.gaussian_matrix(50, 2));
    truth.row(t) = rng.gaussian_matrix(1, 2);
  }
  double prev = 0.0;
  for (double level : {0.5, 0.8, 0.9, 0.95, 0.99}) {
    const double c = coverage(ens, truth, level);
    CHECK(c >= prev);
    prev = c;
  }
}

TEST_CASE("crps closed forms") {
  Matrix at_truth = Matrix::Constant(4, 1, 1.5);
  Matrix truth(1, 1);
  truth << 1.5;
  CHECK(crps({at_truth}, truth) == 0.0);

  Matrix pair(2, 1);
  pair << 0.0, 2.0;
  Matrix one(1, 1);
  one << 1.0;
  CHECK(crps({pair}, one) == doctest::Approx(0.5).epsilon(1e-12));

  // gaussian ensemble against the closed-form gaussian crps at the mode:
  // crps(N(0,1), 0) = 2 phi(0) - 1/sqrt(pi)
  RngStream rng(54, "crps");
  Matrix big = rng.gaussian_matrix(60000, 1);
  Matrix zero(1, 1);
  zero << 0.0;
  const double expect =
      2.0 / std::sqrt(2.0 * M_PI) - 1.0 / std::sqrt(M_PI);
  CHECK(crps({big}, zero) == doctest::Approx(expect).epsilon(0.01));
}

TEST_CASE("crps pair term agrees with the quadratic enumeration") {
  RngStream rng(55, "crpsq");
  Matrix ens = rng.gaussian_matrix(40, 1);
  Matrix y(1, 1);
  y << 0.3;
  double term1 = 0.0;
  for (int i = 0; i < 40; ++i) term1 += std::abs(ens(i, 0) - y(0, 0));
  term1 /= 40.0;
  double term2 = 0.0;
  for (int i = 0; i < 40; ++i) {
    for (int j = 0; j < 40; ++j) term2 += std::abs(ens(i, 0) - ens(j, 0));
  }
  CHECK(crps({ens}, y) ==
        doctest::Approx(term1 - 0.5 * term2 / 1600.0).epsilon(1e-12));
  CHECK(crps({ens}, y, true) ==
        doctest::Approx(term1 - 0.5 * term2 / (40.0 * 39.0)).epsilon(1e-12));
}

TEST_CASE("crps and spread are invariant under member permutation") {
  RngStream rng(56, "perm");
  Matrix ens = rng.gaussian_matrix(30, 2);
  Matrix truth = rng.gaussian_matrix(1, 2);
  Matrix shuffled = ens.colwise().reverse();
  CHECK(crps({ens}, truth) == doctest::Approx(crps({shuffled}, truth)).epsilon(1e-14));
  CHECK(spread({ens}) == doctest::Approx(spread({shuffled})).epsilon(1e-14));
}

TEST_CASE("forecast protocol: perfect and mean predictors") {
  // build a standardized dataset whose truth is known
  RngStream rng(57, "fc");
  Dataset ds;
  ds.observations = rng.gaussian_matrix(140, 1);
  ds.stats = Standardization::identity(1);
  ds.split_index = 140;
  split_standardize(ds, 0.5);

  // perfect forecaster reads the standardized truth back
  ForecastFn perfect = [&](int origin, int horizon) {
    return Matrix(ds.observations.middleRows(origin, horizon));
  };
  ForecastProtocol proto;
  proto.horizon = 20;
  proto.stride = 10;
  CHECK(forecast_rmse(perfect, ds, proto) == 0.0);

  // constant training-mean forecaster lands at the test split's sd
  ForecastFn mean_pred = [&](int, int horizon) {
    return Matrix(Matrix::Zero(horizon, 1));
  };
  const Matrix test = ds.stats.invert(ds.test_observations());
  const double train_mean = ds.stats.mean(0);
  const double ref = std::sqrt((test.array() - train_mean).square().mean());
  // not exact: origins cover a strided subset of the test rows
  CHECK(forecast_rmse(mean_pred, ds, proto) == doctest::Approx(ref).epsilon(0.2));

  // protocol robustness: halving the stride moves the estimate only a little
  ForecastProtocol fine = proto;
  fine.stride = 5;
  CHECK(forecast_rmse(mean_pred, ds, fine) ==
        doctest::Approx(forecast_rmse(mean_pred, ds, proto)).epsilon(0.05));

  // too-short test split is a contract violation
  Dataset short_ds = ds;
  short_ds.split_index = 139;
  ForecastProtocol long_proto;
  long_proto.horizon = 50;
  CHECK_THROWS(forecast_rmse(mean_pred, short_ds, long_proto));
}
