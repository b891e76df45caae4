#pragma once

#include "etg/config.hpp"
#include "etg/metrics.hpp"
#include "etg/model.hpp"
#include "etg/train.hpp"

#include <filesystem>

namespace etg {

// Everything a finished run leaves on disk.
struct RunArtifacts {
  std::filesystem::path dir;
  std::filesystem::path manifest;
  std::filesystem::path checkpoint;
  std::filesystem::path elbo_trace;
  std::filesystem::path metrics;
  std::filesystem::path filtered;
  std::filesystem::path transition;  // empty when not emitted
};

struct RunOutcome {
  RunArtifacts artifacts;
  FilterMetrics filter;
  double forecast_rmse = std::numeric_limits<double>::quiet_NaN();
  TrainResult training;
  double wall_time_s = 0.0;
};

// Builds the dataset a config describes (simulated or CSV) and applies the
// configured split/standardization.
Dataset build_dataset(const Config& cfg);

// Model/train configs resolved from a parsed config.
ModelConfig resolve_model_config(const Config& cfg, const Dataset& ds);
TrainConfig resolve_train_config(const Config& cfg);

// One training run: train, evaluate, write artifacts under
// <output_root>/<run name>. Throws ConfigError for config problems.
RunOutcome run_experiment(const Config& cfg,
                          const std::filesystem::path& output_root);

// Cartesian-product sweep over [grid] keys; failed runs are recorded and the
// sweep continues. Returns the number of failed runs. Aggregates grouped
// over seeds land in <output_root>/sweep_aggregate.csv.
int run_sweep(const Config& cfg, const std::filesystem::path& output_root);

// Rolling-origin forecaster for a trained model: one filtering pass over the
// full sequence, then free-runs from the requested origins (no updates).
ForecastFn make_model_forecaster(Model& model, const Dataset& ds,
                                 std::uint64_t seed, int n_members);

// Classical EnKF with the true dynamics supplied (no learning); reference
// point for the filtering comparisons.
FilterMetrics run_known_enkf(const Dataset& ds, const CallableTransition::Fn& f,
                             double obs_var, double q_filter, int n_members,
                             std::uint64_t seed);

// Final filtering pass of a trained model over the dataset (no gradients).
struct EvalFilter {
  std::vector<Matrix> ensembles;  // x_0 .. x_T in standardized space
  double loglik = 0.0;
};
EvalFilter eval_filter(Model& model, const Dataset& ds, std::uint64_t seed,
                       int n_members, bool include_r = true);

std::filesystem::path default_output_root();

}  // namespace etg
