#pragma once

#include "etg/rng.hpp"
#include "etg/tensor.hpp"

#include <memory>
#include <vector>

namespace etg {

// Trainable state-space pieces shared by every model variant: diagonal
// process/observation noise (log-parameterized), the q(x0) Gaussian, and the
// emission matrix C (fixed to the [I 0] selector unless learning is enabled).
struct SsmParams {
  int d_x = 1;
  int d_y = 1;
  Tensor c;       // d_y x d_x, constant unless learn_c
  Tensor log_q;   // d_x x 1
  Tensor log_r;   // d_y x 1
  Tensor m0;      // d_x x 1
  Tensor l0;      // d_x x d_x, lower triangle used
  bool learn_c = false;

  static SsmParams create(int d_x, int d_y, double q_init = 0.1,
                          double r_init = 0.1, bool learn_c = false);

  std::vector<std::pair<std::string, Tensor>> named_params() const;

  // KL(q(x0) || N(0, I)) as a graph scalar.
  Tensor kl_x0() const;
};

// A transition with all per-iteration randomness (weight draws, posterior
// caches) already baked in; maps an ensemble to the pre-noise mean part
// f(x) of the next state. gp_eps carries the per-member function draws,
// sized n x gp_noise_cols() (empty when the transition has no GP).
class Transition {
 public:
  virtual ~Transition() = default;
  virtual int gp_noise_cols() const { return 0; }
  virtual Tensor mean_map(const Tensor& members, const Matrix& gp_eps) = 0;
};

// Deterministic known-dynamics transition (plain function of the state),
// used by the classical EnKF reference and by linear-Gaussian test systems.
class CallableTransition : public Transition {
 public:
  using Fn = std::function<Matrix(const Matrix&)>;  // rows are members
  explicit CallableTransition(Fn fn) : fn_(std::move(fn)) {}
  Tensor mean_map(const Tensor& members, const Matrix&) override {
    return Tensor::constant(fn_(members.value()));
  }

 private:
  Fn fn_;
};

// Pre-drawn noise for one filtering pass; freezing these makes the whole
// pass a deterministic function of the parameters, which is what both the
// reparameterization trick and common-random-number gradient checks need.
struct NoiseBundle {
  Matrix x0_eps;                // N x d_x
  std::vector<Matrix> gp_eps;   // per step, N x (transition gp cols)
  std::vector<Matrix> q_eps;    // per step, N x d_x
  std::vector<Matrix> r_eps;    // per step, N x d_y

  static NoiseBundle draw(RngStreams& streams, int t_steps, int n_members,
                          int d_x, int d_y, int gp_cols);
};

struct FilterOptions {
  int n_members = 200;
  bool include_r_in_loglik = true;  // observation covariance C P C^T + R
};

struct FilterResult {
  Tensor loglik;                  // scalar graph node, sum over steps
  std::vector<Tensor> ensembles;  // filtered ensembles x_0 .. x_T (N x d_x)
  std::vector<Vector> pred_means;      // predictive means per step
  std::vector<Matrix> pred_covs;       // predictive covariances per step
};

// Ensemble statistics with the N-1 normalization used throughout.
std::pair<Tensor, Tensor> empirical_moments(const Tensor& members);

// Kalman gain P C^T (C P C^T + R)^-1 via the Cholesky factor of the
// innovation covariance (never an explicit inverse).
Tensor kalman_gain(const Tensor& p_pred, const Tensor& c,
                   const Tensor& innov_chol);

// Stochastic EnKF update with perturbed observations.
Tensor enkf_update(const Tensor& members, const Vector& y, const Tensor& gain,
                   const Tensor& c, const Tensor& sqrt_r_diag,
                   const Matrix& r_eps);

// log N(y; C m, C P C^T [+ R]) with the covariance factor supplied.
Tensor step_loglik(const Tensor& mean_pred, const Tensor& c,
                   const Tensor& innov_chol, const Vector& y);

// Full differentiable filter pass over y (T x d_y rows).
FilterResult run_filter(const SsmParams& ssm, Transition& transition,
                        const Matrix& y, const NoiseBundle& noise,
                        const FilterOptions& opts);

}  // namespace etg
