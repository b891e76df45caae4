#include "etg/gradcheck.hpp"

#include <cmath>

namespace etg {

namespace {

double eval_scalar(const std::function<Tensor()>& build) {
  Tensor out = build();
  const double v = out.scalar_value();
  if (!std::isfinite(v)) {
    throw std::runtime_error("finite_difference_check: non-finite value");
  }
  return v;
}

}  // namespace

double finite_difference_check(Tensor param,
                               const std::function<Tensor()>& build,
                               double h) {
  Tensor root = build();
  if (root.rows() != 1 || root.cols() != 1) {
    throw ShapeError("finite_difference_check: build() must return a scalar");
  }
  if (!std::isfinite(root.scalar_value())) {
    throw std::runtime_error("finite_difference_check: non-finite value");
  }
  param.zero_grad();
  backward(root);
  const Matrix ad = param.grad();

  const Matrix base = param.value();
  double worst = 0.0;
  for (Eigen::Index j = 0; j < base.cols(); ++j) {
    for (Eigen::Index i = 0; i < base.rows(); ++i) {
      Matrix perturbed = base;
      perturbed(i, j) = base(i, j) + h;
      param.set_value(perturbed);
      const double fp = eval_scalar(build);
      perturbed(i, j) = base(i, j) - h;
      param.set_value(perturbed);
      const double fm = eval_scalar(build);
      const double fd = (fp - fm) / (2.0 * h);
      const double err = std::abs(ad(i, j) - fd) / (std::abs(fd) + 1e-8);
      worst = std::max(worst, err);
    }
  }
  param.set_value(base);
  return worst;
}

}  // namespace etg
