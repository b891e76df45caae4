#include "etg/adam.hpp"

#include <cmath>

namespace etg {

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.push_back(Matrix::Zero(p.rows(), p.cols()));
    v_.push_back(Matrix::Zero(p.rows(), p.cols()));
  }
}

bool Adam::step() {
  for (const auto& p : params_) {
    if (!p.grad().allFinite()) {
      numerics_log().skipped_optimizer_steps++;
      return false;
    }
  }
  ++step_count_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, step_count_);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, step_count_);
  for (size_t i = 0; i < params_.size(); ++i) {
    const Matrix g = params_[i].grad();
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    const Matrix mhat = m_[i] / bc1;
    const Matrix vhat = v_[i] / bc2;
    Matrix update =
        cfg_.lr * mhat.cwiseQuotient(
                      (vhat.cwiseSqrt().array() + cfg_.epsilon).matrix());
    params_[i].set_value(params_[i].value() - update);
  }
  return true;
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace etg
