#pragma once

#include "etg/kernel.hpp"
#include "etg/rng.hpp"
#include "etg/tensor.hpp"

namespace etg {

// Per-iteration cache of the variational GP posterior: everything that does
// not depend on the query points is assembled once per recorded graph and
// shared across all time steps.
struct GpPosterior {
  Tensor l_zz;     // chol(K_ZZ), M x M
  Tensor alpha;    // K_ZZ^-1 m, M x 1
  Tensor proj;     // K_ZZ^-1 (K_ZZ - S) K_ZZ^-1, M x M
  Tensor zs;       // inducing inputs scaled by 1/lengthscale, M x d
  Tensor zsq;      // row sums of zs^2, M x 1
  Tensor sf2;      // signal variance, 1x1
  Tensor inv_ls;   // 1/lengthscale, d x 1
};

// Single shared sparse variational GP: inducing inputs Z, Gaussian q(u) with
// mean m and covariance S = F F^T for a free lower-triangular factor F.
class SparseGP {
 public:
  // Inducing inputs drawn i.i.d. standard normal; q(u) starts at m = 0 with
  // identity factor so the initial KL is finite and nonzero.
  static SparseGP create(int input_dim, int num_inducing, RngStream& init);

  Eigen::Index num_inducing() const { return z_.rows(); }
  Eigen::Index input_dim() const { return z_.cols(); }

  GpPosterior posterior() const;

  // Predictive mean and variance (clamped at zero) for a batch of query
  // points, as n x 1 tensors. Entries of the pre-clamp variance below -1e-8
  // are counted as numerical-health warnings.
  static std::pair<Tensor, Tensor> predict(const GpPosterior& post,
                                           const Tensor& x);

  // Reparameterized marginal draw f(x) = mean + sqrt(var) * eps.
  static Tensor sample(const GpPosterior& post, const Tensor& x,
                       const Matrix& eps);

  // KL(q(u) || p(u)) as a scalar graph node.
  Tensor kl() const;

  // Joint predictive moments at a small set of points (dense n x n
  // covariance); plain values, for oracles and diagnostics.
  void predict_joint(const Matrix& x, Vector& mean_out, Matrix& cov_out) const;

  SEKernel& kernel() { return kernel_; }
  const SEKernel& kernel() const { return kernel_; }
  Tensor inducing_inputs() const { return z_; }
  Tensor variational_mean() const { return m_; }
  Tensor variational_factor() const { return s_factor_; }

 private:
  Tensor z_;         // M x d parameter
  Tensor m_;         // M x 1 parameter
  Tensor s_factor_;  // M x M parameter, lower triangle used
  SEKernel kernel_;
};

}  // namespace etg
