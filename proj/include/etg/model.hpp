#pragma once

#include "etg/flows.hpp"
#include "etg/sparse_gp.hpp"
#include "etg/ssm.hpp"

#include <memory>
#include <optional>
#include <string>

namespace etg {

enum class Variant {
  etgpssm_dnn,
  etgpssm_bnn,
  gpssm_independent,
  adenkf_dnn,
  adenkf_bnn,
};

std::string to_string(Variant v);
std::optional<Variant> variant_from_string(const std::string& s);

struct ModelConfig {
  Variant variant = Variant::etgpssm_dnn;
  int d_x = 1;
  int d_y = 1;
  int num_inducing = 20;
  FlowKind flow = FlowKind::linear;
  double q_init = 0.1;
  double r_init = 0.1;
  bool learn_c = false;
  bool learn_prior_psi = false;
  int hidden1 = 128;
  int hidden2 = 64;
};

// Frozen per-iteration randomness: one weight draw plus the filter noise.
struct IterationDraws {
  std::vector<Matrix> weight_eps;
  NoiseBundle noise;
};

// A state-space model variant: dynamics (GP/flow/network) plus the shared
// SSM parameters. Owns every trainable tensor.
class Model {
 public:
  static Model create(const ModelConfig& cfg, RngStream& init);

  const ModelConfig& config() const { return cfg_; }
  SsmParams& ssm() { return ssm_; }
  const SsmParams& ssm() const { return ssm_; }

  int gp_noise_cols() const;

  IterationDraws make_draws(RngStreams& streams, int t_steps, int n_members);

  // Builds the per-iteration transition with weights/posteriors baked in.
  std::unique_ptr<Transition> make_transition(
      const std::vector<Matrix>& weight_eps) const;

  // KL terms; zero constants where a variant has no such term.
  Tensor kl_inducing() const;
  Tensor kl_weights() const;

  // Deterministic mean of the learned transition at given states (rows),
  // evaluated with point weights and the GP predictive mean.
  Matrix mean_transition(const Matrix& x) const;

  // Per-dimension variance of the transition function value at given states
  // (flow-scaled GP variance; zero for the neural baselines).
  Matrix transition_variance(const Matrix& x) const;

  std::vector<std::pair<std::string, Tensor>> named_params() const;

  // Breakdown used by the parameter-accounting checks.
  struct ParamCounts {
    long gp_core = 0;   // inducing inputs + variational mean + factor
    long kernel = 0;    // actual kernel scalars (ARD)
    long network = 0;   // network weight means (+ variances when bayesian)
    long total = 0;     // every trainable scalar in the model
  };
  ParamCounts count_trainable() const;

 private:
  ModelConfig cfg_;
  SsmParams ssm_;
  std::vector<SparseGP> gps_;       // 1 for etgpssm, d_x for independent
  std::optional<FlowNet> net_;      // flow net or neural transition
};

struct ElboReport {
  double total = 0.0;
  double loglik = 0.0;
  double kl_u = 0.0;
  double kl_w = 0.0;
  double kl_x0 = 0.0;
  int iteration = 0;
};

struct ElboComputation {
  Tensor total;  // scalar graph node (the quantity to maximize)
  ElboReport report;
  FilterResult filter;
};

// Single-sample estimate of the evidence lower bound: one weight draw, one
// x0 ensemble, one filtering pass; the three KLs subtracted in closed form.
ElboComputation elbo(Model& model, const Matrix& y,
                     const IterationDraws& draws, const FilterOptions& opts);

}  // namespace etg
