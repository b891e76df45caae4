#pragma once

#include "etg/systems.hpp"

#include <functional>
#include <vector>

namespace etg {

// Root mean squared error over all entries.
double rmse(const Matrix& estimates, const Matrix& truth);

// Root mean (over time) of trace(cov_t)/d for per-step ensemble covariances
// with the N-1 normalization.
double spread(const std::vector<Matrix>& ensembles);

// Fraction of (t, d) pairs whose truth lies inside the central interval of
// the ensemble marginals (linear-interpolation quantiles).
double coverage(const std::vector<Matrix>& ensembles, const Matrix& truth,
                double level = 0.95);

// Ensemble CRPS, averaged over time and dimensions. The default estimator
// divides the pair term by N^2; the fair variant uses N(N-1).
double crps(const std::vector<Matrix>& ensembles, const Matrix& truth,
            bool fair = false);

// Linear-interpolation empirical quantile of a sample.
double quantile(std::vector<double> values, double p);

struct FilterMetrics {
  double rmse = 0.0;
  double spread = 0.0;
  double coverage = 0.0;
  double crps = 0.0;
  Vector rmse_per_dim;
};

// Metrics of a filtered ensemble trajectory against known states.
FilterMetrics filter_metrics(const std::vector<Matrix>& ensembles,
                             const Matrix& truth);

struct ForecastProtocol {
  int horizon = 50;
  int stride = 10;
};

// Returns predicted observation means (horizon x d_y) in the dataset's
// observation space given everything up to, and excluding, row `origin`.
using ForecastFn = std::function<Matrix(int origin, int horizon)>;

// Rolling-origin forecast RMSE over the test split, reported in the original
// (de-standardized) scale. Origins start at the split boundary and advance
// by `stride` while a full horizon of truth remains.
double forecast_rmse(const ForecastFn& forecast, const Dataset& ds,
                     const ForecastProtocol& proto = {});

}  // namespace etg
