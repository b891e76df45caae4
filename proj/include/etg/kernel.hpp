#pragma once

#include "etg/tensor.hpp"

namespace etg {

// Squared-exponential kernel with ARD lengthscales, log-parameterized so the
// signal variance and lengthscales stay positive by construction.
struct SEKernel {
  Tensor log_signal_variance;  // 1x1
  Tensor log_lengthscales;     // d x 1

  static SEKernel create(int input_dim, double signal_variance = 1.0,
                         double lengthscale = 1.0);

  Eigen::Index input_dim() const { return log_lengthscales.rows(); }

  // Gram matrix between two input sets (rows are points).
  Tensor gram(const Tensor& x, const Tensor& x2) const;

  // k(x, x) = signal variance, as a 1x1 tensor.
  Tensor diag_value() const { return etg::exp(log_signal_variance); }

  // Plain-value evaluation for oracles and diagnostics.
  double eval(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const;
};

}  // namespace etg
