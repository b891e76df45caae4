#include "etg/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace etg {

double rmse(const Matrix& estimates, const Matrix& truth) {
  if (estimates.rows() != truth.rows() || estimates.cols() != truth.cols()) {
    throw std::invalid_argument("rmse: shape mismatch");
  }
  return std::sqrt((estimates - truth).squaredNorm() /
                   static_cast<double>(truth.size()));
}

double spread(const std::vector<Matrix>& ensembles) {
  if (ensembles.empty()) return 0.0;
  double acc = 0.0;
  for (const Matrix& ens : ensembles) {
    const Eigen::Index n = ens.rows();
    if (n < 2) throw std::invalid_argument("spread: need at least 2 members");
    const Eigen::RowVectorXd mean = ens.colwise().mean();
    double tr = 0.0;
    for (Eigen::Index j = 0; j < ens.cols(); ++j) {
      tr += (ens.col(j).array() - mean(j)).square().sum() /
            static_cast<double>(n - 1);
    }
    acc += tr / static_cast<double>(ens.cols());
  }
  return std::sqrt(acc / static_cast<double>(ensembles.size()));
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("quantile: empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto k = static_cast<size_t>(std::floor(h));
  if (k + 1 >= values.size()) return values.back();
  return values[k] + (h - k) * (values[k + 1] - values[k]);
}

double coverage(const std::vector<Matrix>& ensembles, const Matrix& truth,
                double level) {
  if (static_cast<Eigen::Index>(ensembles.size()) != truth.rows()) {
    throw std::invalid_argument("coverage: trajectory length mismatch");
  }
  const double lo_p = 0.5 * (1.0 - level);
  const double hi_p = 1.0 - lo_p;
  long hits = 0, total = 0;
  for (size_t t = 0; t < ensembles.size(); ++t) {
    const Matrix& ens = ensembles[t];
    for (Eigen::Index j = 0; j < ens.cols(); ++j) {
      std::vector<double> col(ens.col(j).data(), ens.col(j).data() + ens.rows());
      const double lo = quantile(col, lo_p);
      const double hi = quantile(col, hi_p);
      const double x = truth(static_cast<Eigen::Index>(t), j);
      if (x >= lo && x <= hi) ++hits;
      ++total;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

namespace {

// CRPS of one scalar sample against one truth value.
double crps_scalar(std::vector<double> xs, double y, bool fair) {
  const double n = static_cast<double>(xs.size());
  double term1 = 0.0;
  for (double x : xs) term1 += std::abs(x - y);
  term1 /= n;
  std::sort(xs.begin(), xs.end());
  // sum over ordered pairs |x_i - x_j| = 2 sum_{i<j} (x_(j) - x_(i))
  double pair_sum = 0.0;
  double prefix = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    pair_sum += static_cast<double>(i) * xs[i] - prefix;
    prefix += xs[i];
  }
  pair_sum *= 2.0;
  const double denom = fair ? n * (n - 1.0) : n * n;
  return term1 - 0.5 * pair_sum / denom;
}

}  // namespace

double crps(const std::vector<Matrix>& ensembles, const Matrix& truth,
            bool fair) {
  if (static_cast<Eigen::Index>(ensembles.size()) != truth.rows()) {
    throw std::invalid_argument("crps: trajectory length mismatch");
  }
  double acc = 0.0;
  long count = 0;
  for (size_t t = 0; t < ensembles.size(); ++t) {
    const Matrix& ens = ensembles[t];
    if (ens.rows() < 2) throw std::invalid_argument("crps: need N >= 2");
    for (Eigen::Index j = 0; j < ens.cols(); ++j) {
      std::vector<double> col(ens.col(j).data(), ens.col(j).data() + ens.rows());
      acc += crps_scalar(std::move(col), truth(static_cast<Eigen::Index>(t), j),
                         fair);
      ++count;
    }
  }
  return acc / static_cast<double>(count);
}

FilterMetrics filter_metrics(const std::vector<Matrix>& ensembles,
                             const Matrix& truth) {
  FilterMetrics fm;
  const Eigen::Index t = truth.rows();
  const Eigen::Index d = truth.cols();
  Matrix means(t, d);
  for (Eigen::Index i = 0; i < t; ++i) {
    means.row(i) = ensembles[static_cast<size_t>(i)].colwise().mean();
  }
  fm.rmse = rmse(means, truth);
  fm.rmse_per_dim.resize(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    fm.rmse_per_dim(j) = rmse(means.col(j), truth.col(j));
  }
  fm.spread = spread(ensembles);
  fm.coverage = coverage(ensembles, truth);
  fm.crps = crps(ensembles, truth);
  return fm;
}

double forecast_rmse(const ForecastFn& forecast, const Dataset& ds,
                     const ForecastProtocol& proto) {
  const int t = ds.t_steps();
  const int test_len = t - ds.split_index;
  if (test_len < proto.horizon + 1) {
    throw std::invalid_argument(
        "forecast_rmse: test split shorter than horizon + 1");
  }
  if (proto.stride < 1) throw std::invalid_argument("forecast_rmse: stride < 1");
  double acc = 0.0;
  long count = 0;
  for (int origin = ds.split_index; origin + proto.horizon <= t;
       origin += proto.stride) {
    const Matrix pred = forecast(origin, proto.horizon);
    if (pred.rows() != proto.horizon || pred.cols() != ds.d_y()) {
      throw std::invalid_argument("forecast_rmse: bad prediction shape");
    }
    const Matrix pred_orig = ds.stats.invert(pred);
    const Matrix truth_orig =
        ds.stats.invert(ds.observations.middleRows(origin, proto.horizon));
    acc += (pred_orig - truth_orig).squaredNorm();
    count += pred.size();
  }
  return std::sqrt(acc / static_cast<double>(count));
}

}  // namespace etg
