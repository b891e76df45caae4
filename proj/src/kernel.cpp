#include "etg/kernel.hpp"

#include <cmath>

namespace etg {

SEKernel SEKernel::create(int input_dim, double signal_variance,
                          double lengthscale) {
  SEKernel k;
  k.log_signal_variance =
      Tensor::parameter(Matrix::Constant(1, 1, std::log(signal_variance)));
  k.log_lengthscales = Tensor::parameter(
      Matrix::Constant(input_dim, 1, std::log(lengthscale)));
  return k;
}

Tensor SEKernel::gram(const Tensor& x, const Tensor& x2) const {
  if (x.cols() != input_dim() || x2.cols() != input_dim()) {
    throw ShapeError("SEKernel::gram: input dimension mismatch");
  }
  Tensor inv_ls = etg::exp(scale(log_lengthscales, -1.0));  // d x 1
  Tensor xs = mul(x, transpose(inv_ls));                    // n x d
  Tensor x2s = mul(x2, transpose(inv_ls));                  // m x d
  Tensor xsq = sum_rows(square(xs));                        // n x 1
  Tensor x2sq = sum_rows(square(x2s));                      // m x 1
  Tensor cross = matmul(xs, transpose(x2s));                // n x m
  Tensor sqdist = sub(add(xsq, transpose(x2sq)), scale(cross, 2.0));
  return mul(etg::exp(log_signal_variance), etg::exp(scale(sqdist, -0.5)));
}

double SEKernel::eval(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
  const double sf2 = std::exp(log_signal_variance.value()(0, 0));
  double d2 = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double ls = std::exp(log_lengthscales.value()(i, 0));
    const double diff = (a(i) - b(i)) / ls;
    d2 += diff * diff;
  }
  return sf2 * std::exp(-0.5 * d2);
}

}  // namespace etg
