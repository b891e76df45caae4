#pragma once

#include "etg/tensor.hpp"

namespace etg {

struct AdamConfig {
  double lr = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam over a fixed set of parameter tensors. step() reads the gradients
// accumulated by the latest backward pass and applies a descent update with
// bias correction; maximization is realized by negating the loss upstream.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig cfg = {});

  // Returns false (and counts a skipped step) if any gradient is non-finite;
  // parameters and the step count are left untouched in that case.
  bool step();

  void zero_grad();
  long step_count() const { return step_count_; }
  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  AdamConfig cfg_;
  long step_count_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

}  // namespace etg
