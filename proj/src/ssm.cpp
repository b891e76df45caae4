#include "etg/ssm.hpp"

#include <cmath>

namespace etg {

SsmParams SsmParams::create(int d_x, int d_y, double q_init, double r_init,
                            bool learn_c) {
  if (d_x < 1 || d_y < 1 || d_y > d_x) {
    throw ShapeError("SsmParams: need 1 <= d_y <= d_x");
  }
  SsmParams p;
  p.d_x = d_x;
  p.d_y = d_y;
  p.learn_c = learn_c;
  Matrix c = Matrix::Zero(d_y, d_x);
  c.leftCols(d_y) = Matrix::Identity(d_y, d_y);
  p.c = learn_c ? Tensor::parameter(c) : Tensor::constant(c);
  p.log_q = Tensor::parameter(Matrix::Constant(d_x, 1, std::log(q_init)));
  p.log_r = Tensor::parameter(Matrix::Constant(d_y, 1, std::log(r_init)));
  p.m0 = Tensor::parameter(Matrix::Zero(d_x, 1));
  p.l0 = Tensor::parameter(Matrix::Identity(d_x, d_x));
  return p;
}

std::vector<std::pair<std::string, Tensor>> SsmParams::named_params() const {
  std::vector<std::pair<std::string, Tensor>> out = {
      {"ssm.log_q", log_q}, {"ssm.log_r", log_r},
      {"ssm.m0", m0},       {"ssm.l0", l0}};
  if (learn_c) out.emplace_back("ssm.c", c);
  return out;
}

Tensor SsmParams::kl_x0() const {
  // KL(N(m0, L0 L0^T) || N(0, I))
  //   = 0.5 [ ||L0||_F^2 + ||m0||^2 - d - 2 sum log |L0_ii| ]
  Tensor l = tril(l0);
  Tensor trace_term = sum(square(l));
  Tensor quad = sum(square(m0));
  Tensor logdet = scale(sum(log_abs(diag_of(l))), 2.0);
  Tensor d = Tensor::scalar(static_cast<double>(d_x));
  return scale(sub(sub(add(trace_term, quad), d), logdet), 0.5);
}

NoiseBundle NoiseBundle::draw(RngStreams& streams, int t_steps, int n_members,
                              int d_x, int d_y, int gp_cols) {
  NoiseBundle nb;
  nb.x0_eps = streams.init.gaussian_matrix(n_members, d_x);
  nb.gp_eps.reserve(t_steps);
  nb.q_eps.reserve(t_steps);
  nb.r_eps.reserve(t_steps);
  for (int t = 0; t < t_steps; ++t) {
    nb.gp_eps.push_back(gp_cols > 0
                            ? streams.gp_draws.gaussian_matrix(n_members, gp_cols)
                            : Matrix(n_members, 0));
    nb.q_eps.push_back(streams.filter_noise.gaussian_matrix(n_members, d_x));
    nb.r_eps.push_back(streams.filter_noise.gaussian_matrix(n_members, d_y));
  }
  return nb;
}

std::pair<Tensor, Tensor> empirical_moments(const Tensor& members) {
  const Eigen::Index n = members.rows();
  if (n < 2) throw ShapeError("empirical_moments: need at least 2 members");
  Tensor mean_row = mean_cols(members);              // 1 x d
  Tensor centered = sub(members, mean_row);          // row broadcast
  Tensor cov = scale(matmul(transpose(centered), centered),
                     1.0 / static_cast<double>(n - 1));
  return {transpose(mean_row), cov};
}

Tensor kalman_gain(const Tensor& p_pred, const Tensor& c,
                   const Tensor& innov_chol) {
  Tensor cp = matmul(c, p_pred);  // d_y x d_x
  Tensor solved = tri_solve(innov_chol, tri_solve(innov_chol, cp), true);
  return transpose(solved);  // P C^T S^-1
}

Tensor enkf_update(const Tensor& members, const Vector& y, const Tensor& gain,
                   const Tensor& c, const Tensor& sqrt_r_diag,
                   const Matrix& r_eps) {
  if (y.size() != c.rows() || r_eps.cols() != c.rows() ||
      r_eps.rows() != members.rows()) {
    throw ShapeError("enkf_update: observation dimensions disagree");
  }
  Tensor y_row = Tensor::constant(y.transpose());              // 1 x d_y
  Tensor pert = mul(Tensor::constant(r_eps), transpose(sqrt_r_diag));
  Tensor innovation =
      sub(add(y_row, pert), matmul(members, transpose(c)));    // N x d_y
  return add(members, matmul(innovation, transpose(gain)));
}

Tensor step_loglik(const Tensor& mean_pred, const Tensor& c,
                   const Tensor& innov_chol, const Vector& y) {
  const double d = static_cast<double>(y.size());
  Tensor resid = sub(Tensor::constant(y), matmul(c, mean_pred));  // d_y x 1
  Tensor white = tri_solve(innov_chol, resid);
  Tensor quad = sum(square(white));
  Tensor logdet = scale(sum(log(diag_of(innov_chol))), 2.0);
  const double norm_const = d * std::log(2.0 * M_PI);
  return scale(add(add(quad, logdet), Tensor::scalar(norm_const)), -0.5);
}

FilterResult run_filter(const SsmParams& ssm, Transition& transition,
                        const Matrix& y, const NoiseBundle& noise,
                        const FilterOptions& opts) {
  const int t_steps = static_cast<int>(y.rows());
  if (y.cols() != ssm.d_y) throw ShapeError("run_filter: y has wrong width");
  if (static_cast<int>(noise.q_eps.size()) < t_steps) {
    throw ShapeError("run_filter: noise bundle shorter than the sequence");
  }

  FilterResult res;
  Tensor sqrt_q = etg::exp(scale(ssm.log_q, 0.5));  // d_x x 1
  Tensor sqrt_r = etg::exp(scale(ssm.log_r, 0.5));  // d_y x 1
  Tensor r_diag = diag_from(etg::exp(ssm.log_r));

  // x0 ensemble via reparameterization: m0 + L0 eps
  Tensor ens = add(transpose(ssm.m0),
                   matmul(Tensor::constant(noise.x0_eps),
                          transpose(tril(ssm.l0))));
  res.ensembles.push_back(ens);
  res.loglik = Tensor::scalar(0.0);

  for (int t = 0; t < t_steps; ++t) {
    try {
      Tensor drift = transition.mean_map(ens, noise.gp_eps[t]);
      Tensor pred = add(drift, mul(Tensor::constant(noise.q_eps[t]),
                                   transpose(sqrt_q)));
      if (!pred.value().allFinite()) {
        throw std::runtime_error("non-finite predictive ensemble");
      }
      auto [mean_pred, p_pred] = empirical_moments(pred);
      res.pred_means.push_back(mean_pred.value().col(0));
      res.pred_covs.push_back(p_pred.value());

      Tensor cpc = matmul(matmul(ssm.c, p_pred), transpose(ssm.c));
      Tensor innov_with_r = cholesky_spd(add(cpc, r_diag));
      Tensor gain = kalman_gain(p_pred, ssm.c, innov_with_r);

      Tensor loglik_chol =
          opts.include_r_in_loglik ? innov_with_r : cholesky_spd(cpc);
      res.loglik = add(res.loglik,
                       step_loglik(mean_pred, ssm.c, loglik_chol, y.row(t)));

      ens = enkf_update(pred, y.row(t), gain, ssm.c, sqrt_r, noise.r_eps[t]);
      res.ensembles.push_back(ens);
    } catch (const std::exception& e) {
      throw std::runtime_error("run_filter: step " + std::to_string(t + 1) +
                               ": " + e.what());
    }
  }
  return res;
}

}  // namespace etg
