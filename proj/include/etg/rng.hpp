#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <string_view>

namespace etg {

// One named random substream. All randomness in a run flows from a single
// seed through named streams so that components can be perturbed or frozen
// independently in tests. Gaussian draws use an explicit Box-Muller so the
// sequence does not depend on the standard library implementation.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string_view name);

  double uniform();   // [0, 1)
  double gaussian();  // standard normal
  Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols);

 private:
  std::mt19937_64 gen_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

// The substreams used by a training/filtering run.
struct RngStreams {
  RngStream init;
  RngStream filter_noise;
  RngStream gp_draws;
  RngStream weight_draws;

  explicit RngStreams(std::uint64_t seed)
      : init(seed, "init"),
        filter_noise(seed, "filter-noise"),
        gp_draws(seed, "gp-draws"),
        weight_draws(seed, "weight-draws") {}
};

std::uint64_t fnv1a64(std::string_view text);

}  // namespace etg
