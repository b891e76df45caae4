#pragma once

#include "etg/rng.hpp"
#include "etg/tensor.hpp"

namespace etg {

enum class FlowKind { linear, sal };
enum class WeightMode { deterministic, bayesian };

int flow_params_per_dim(FlowKind kind);  // linear: 2, sal: 4

// Per-dimension flow parameters for a batch of inputs, each n x d_x.
// gamma/phi are defined for the SAL flow only.
struct FlowParams {
  Tensor alpha;
  Tensor beta;
  Tensor gamma;
  Tensor phi;
};

// One sampled (or point) set of network weights, as graph tensors; drawn
// once per training iteration and shared across all time steps and members.
struct FlowNetDraw {
  Tensor w1, b1, w2, b2, w3, b3;
};

// Fully connected network emitting flow parameters (or, with a plain output
// head, a direct transition drift for the neural baseline). Hidden layers
// default to 128 and 64 with ReLU. Weights are either deterministic or a
// mean-field Gaussian posterior with prior N(0, psi I).
class FlowNet {
 public:
  struct Config {
    int in_dim = 1;
    int out_dim = 2;  // d_x * flow_params_per_dim, or d_x for plain heads
    int hidden1 = 128;
    int hidden2 = 64;
    WeightMode mode = WeightMode::deterministic;
    double init_log_sigma = -5.0;  // bayesian: near-deterministic start
    double prior_variance = 1.0;   // psi
    bool learn_prior = false;
  };

  static FlowNet create(const Config& cfg, RngStream& init);

  const Config& config() const { return cfg_; }

  // Number of scalar weights and biases (one mean set; variances excluded).
  long weight_count() const;

  // Samples weights via the reparameterization trick (bayesian) or returns
  // the point weights (deterministic). eps must come from draw_weight_eps
  // with matching shapes (drawn fresh per iteration, or frozen in tests).
  FlowNetDraw draw(const std::vector<Matrix>& eps) const;
  std::vector<Matrix> draw_weight_eps(RngStream& stream) const;

  // Point-weight draw for evaluation paths (bayesian mode uses the means).
  FlowNetDraw mean_draw() const;

  // Batch forward pass: x is n x in_dim, result n x out_dim.
  static Tensor forward(const FlowNetDraw& d, const Tensor& x);

  // Forward pass plus splitting/softplus of the flow-parameter head.
  static FlowParams flow_params(const FlowNetDraw& d, const Tensor& x,
                                FlowKind kind, int d_x);

  // KL(q(w) || p(w)); a 0 constant in deterministic mode.
  Tensor kl_weights() const;

  std::vector<std::pair<std::string, Tensor>> named_params(
      const std::string& prefix) const;

  // Output-head bias, exposed so model assembly can shape the initial flow.
  Tensor output_bias() const { return b3_; }

 private:
  Config cfg_;
  // means (or point weights)
  Tensor w1_, b1_, w2_, b2_, w3_, b3_;
  // bayesian: log standard deviations, matching shapes
  Tensor ls_w1_, ls_b1_, ls_w2_, ls_b2_, ls_w3_, ls_b3_;
  Tensor log_psi_;
};

// Elementwise flows warping a shared scalar function value per output
// dimension. fvalue is n x 1 and broadcasts across the d_x columns.
Tensor linear_flow(const FlowParams& p, const Tensor& fvalue);
Tensor sal_flow(const FlowParams& p, const Tensor& fvalue);

// Analytic inverses (plain values), for bijectivity checks.
double linear_flow_inverse(double alpha, double beta, double y);
double sal_flow_inverse(double alpha, double beta, double gamma, double phi,
                        double y);

// Joint Gaussian over (f(x_t), f(x_t')) for deterministic weights: mean
// stacks the offsets, covariance blocks are k(x_a, x_b) * alpha_a alpha_b^T.
struct JointMoments {
  Vector mean;  // 2 d_x
  Matrix cov;   // 2 d_x x 2 d_x
};
JointMoments etgp_joint_cov(const Vector& alpha_t, const Vector& alpha_u,
                            const Vector& beta_t, const Vector& beta_u,
                            double k_tt, double k_tu, double k_uu);

}  // namespace etg
