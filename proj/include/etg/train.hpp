#pragma once

#include "etg/adam.hpp"
#include "etg/model.hpp"

#include <map>
#include <string>

namespace etg {

struct TrainConfig {
  int epochs = 1000;
  double learning_rate = 0.005;
  int ensemble = 200;
  int patience = 50;        // epochs without smoothed-ELBO improvement
  int smooth_window = 10;
  std::uint64_t seed = 0;
  bool include_r_in_loglik = true;
  bool early_stopping = true;
};

struct TrainResult {
  std::vector<ElboReport> trace;
  int epochs_run = 0;
  int best_epoch = 0;
  double best_smoothed = 0.0;
  long skipped_steps = 0;
};

// Full-sequence gradient ascent on the ELBO with Adam; keeps the parameters
// from the epoch with the best window-smoothed ELBO and restores them at the
// end. Three consecutive non-finite evaluations abort.
TrainResult train(Model& model, const Matrix& y, const TrainConfig& cfg);

// Flat key -> array serialization of all model parameters.
void save_checkpoint(const Model& model, const std::string& path,
                     const std::string& config_hash);
void load_checkpoint(Model& model, const std::string& path);

}  // namespace etg
