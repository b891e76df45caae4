#include "etg/flows.hpp"

#include <cmath>

namespace etg {

int flow_params_per_dim(FlowKind kind) {
  return kind == FlowKind::linear ? 2 : 4;
}

namespace {

Matrix fan_in_init(RngStream& rng, int rows, int cols) {
  return rng.gaussian_matrix(rows, cols) / std::sqrt(static_cast<double>(cols));
}

}  // namespace

FlowNet FlowNet::create(const Config& cfg, RngStream& init) {
  FlowNet net;
  net.cfg_ = cfg;
  net.w1_ = Tensor::parameter(fan_in_init(init, cfg.hidden1, cfg.in_dim));
  net.b1_ = Tensor::parameter(Matrix::Zero(cfg.hidden1, 1));
  net.w2_ = Tensor::parameter(fan_in_init(init, cfg.hidden2, cfg.hidden1));
  net.b2_ = Tensor::parameter(Matrix::Zero(cfg.hidden2, 1));
  net.w3_ = Tensor::parameter(fan_in_init(init, cfg.out_dim, cfg.hidden2));
  net.b3_ = Tensor::parameter(Matrix::Zero(cfg.out_dim, 1));
  if (cfg.mode == WeightMode::bayesian) {
    auto ls = [&](const Tensor& like) {
      return Tensor::parameter(
          Matrix::Constant(like.rows(), like.cols(), cfg.init_log_sigma));
    };
    net.ls_w1_ = ls(net.w1_);
    net.ls_b1_ = ls(net.b1_);
    net.ls_w2_ = ls(net.w2_);
    net.ls_b2_ = ls(net.b2_);
    net.ls_w3_ = ls(net.w3_);
    net.ls_b3_ = ls(net.b3_);
  }
  net.log_psi_ =
      Tensor::parameter(Matrix::Constant(1, 1, std::log(cfg.prior_variance)));
  return net;
}

long FlowNet::weight_count() const {
  return w1_.size() + b1_.size() + w2_.size() + b2_.size() + w3_.size() +
         b3_.size();
}

std::vector<Matrix> FlowNet::draw_weight_eps(RngStream& stream) const {
  if (cfg_.mode == WeightMode::deterministic) return {};
  std::vector<Matrix> eps;
  for (const Tensor* t : {&w1_, &b1_, &w2_, &b2_, &w3_, &b3_}) {
    eps.push_back(stream.gaussian_matrix(t->rows(), t->cols()));
  }
  return eps;
}

FlowNetDraw FlowNet::draw(const std::vector<Matrix>& eps) const {
  if (cfg_.mode == WeightMode::deterministic) {
    return {w1_, b1_, w2_, b2_, w3_, b3_};
  }
  if (eps.size() != 6) {
    throw ShapeError("FlowNet::draw: expected 6 eps matrices");
  }
  auto sample = [](const Tensor& m, const Tensor& ls, const Matrix& e) {
    return add(m, mul(etg::exp(ls), Tensor::constant(e)));
  };
  return {sample(w1_, ls_w1_, eps[0]), sample(b1_, ls_b1_, eps[1]),
          sample(w2_, ls_w2_, eps[2]), sample(b2_, ls_b2_, eps[3]),
          sample(w3_, ls_w3_, eps[4]), sample(b3_, ls_b3_, eps[5])};
}

FlowNetDraw FlowNet::mean_draw() const {
  return {w1_, b1_, w2_, b2_, w3_, b3_};
}

Tensor FlowNet::forward(const FlowNetDraw& d, const Tensor& x) {
  Tensor h1 = affine(x, d.w1, d.b1, true);
  Tensor h2 = affine(h1, d.w2, d.b2, true);
  return affine(h2, d.w3, d.b3, false);
}

FlowParams FlowNet::flow_params(const FlowNetDraw& d, const Tensor& x,
                                FlowKind kind, int d_x) {
  Tensor out = forward(d, x);
  const int per = flow_params_per_dim(kind);
  if (out.cols() != per * d_x) {
    throw ShapeError("flow_params: head width does not match flow kind");
  }
  FlowParams p;
  const Eigen::Index n = out.rows();
  p.alpha = slice(out, 0, 0, n, d_x);
  p.beta = slice(out, 0, d_x, n, d_x);
  if (kind == FlowKind::sal) {
    p.gamma = slice(out, 0, 2 * d_x, n, d_x);
    p.phi = softplus(slice(out, 0, 3 * d_x, n, d_x));
  }
  return p;
}

Tensor FlowNet::kl_weights() const {
  if (cfg_.mode == WeightMode::deterministic) {
    return Tensor::scalar(0.0);
  }
  Tensor psi_inv = etg::exp(scale(log_psi_, -1.0));
  Tensor total = Tensor::scalar(0.0);
  const std::pair<const Tensor*, const Tensor*> pairs[] = {
      {&w1_, &ls_w1_}, {&b1_, &ls_b1_}, {&w2_, &ls_w2_},
      {&b2_, &ls_b2_}, {&w3_, &ls_w3_}, {&b3_, &ls_b3_}};
  for (const auto& [m, ls] : pairs) {
    // KL(N(m, s^2) || N(0, psi)) summed elementwise:
    //   0.5 [ (m^2 + s^2)/psi - 1 - 2 log s + log psi ]
    Tensor s2 = etg::exp(scale(*ls, 2.0));
    Tensor ratio = mul(add(square(*m), s2), psi_inv);
    Tensor logs = add(sub(scale(*ls, -2.0), Tensor::scalar(1.0)), log_psi_);
    total = add(total, scale(sum(add(ratio, logs)), 0.5));
  }
  return total;
}

std::vector<std::pair<std::string, Tensor>> FlowNet::named_params(
    const std::string& prefix) const {
  std::vector<std::pair<std::string, Tensor>> out = {
      {prefix + ".w1", w1_}, {prefix + ".b1", b1_}, {prefix + ".w2", w2_},
      {prefix + ".b2", b2_}, {prefix + ".w3", w3_}, {prefix + ".b3", b3_}};
  if (cfg_.mode == WeightMode::bayesian) {
    out.insert(out.end(), {{prefix + ".ls_w1", ls_w1_},
                           {prefix + ".ls_b1", ls_b1_},
                           {prefix + ".ls_w2", ls_w2_},
                           {prefix + ".ls_b2", ls_b2_},
                           {prefix + ".ls_w3", ls_w3_},
                           {prefix + ".ls_b3", ls_b3_}});
  }
  if (cfg_.learn_prior) out.emplace_back(prefix + ".log_psi", log_psi_);
  return out;
}

Tensor linear_flow(const FlowParams& p, const Tensor& fvalue) {
  return add(mul(p.alpha, fvalue), p.beta);
}

Tensor sal_flow(const FlowParams& p, const Tensor& fvalue) {
  Tensor u = asinh(fvalue);
  Tensor arg = sub(mul(p.phi, u), p.gamma);
  return add(mul(p.alpha, etg::sinh(arg)), p.beta);
}

double linear_flow_inverse(double alpha, double beta, double y) {
  return (y - beta) / alpha;
}

double sal_flow_inverse(double alpha, double beta, double gamma, double phi,
                        double y) {
  return std::sinh((std::asinh((y - beta) / alpha) + gamma) / phi);
}

JointMoments etgp_joint_cov(const Vector& alpha_t, const Vector& alpha_u,
                            const Vector& beta_t, const Vector& beta_u,
                            double k_tt, double k_tu, double k_uu) {
  const Eigen::Index d = alpha_t.size();
  JointMoments jm;
  jm.mean.resize(2 * d);
  jm.mean << beta_t, beta_u;
  jm.cov.resize(2 * d, 2 * d);
  jm.cov.topLeftCorner(d, d) = k_tt * (alpha_t * alpha_t.transpose());
  jm.cov.topRightCorner(d, d) = k_tu * (alpha_t * alpha_u.transpose());
  jm.cov.bottomLeftCorner(d, d) = k_tu * (alpha_u * alpha_t.transpose());
  jm.cov.bottomRightCorner(d, d) = k_uu * (alpha_u * alpha_u.transpose());
  return jm;
}

}  // namespace etg
