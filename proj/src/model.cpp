#include "etg/model.hpp"

#include <cmath>

namespace etg {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::etgpssm_dnn: return "etgpssm-dnn";
    case Variant::etgpssm_bnn: return "etgpssm-bnn";
    case Variant::gpssm_independent: return "gpssm-independent";
    case Variant::adenkf_dnn: return "ad-enkf-dnn";
    case Variant::adenkf_bnn: return "ad-enkf-bnn";
  }
  return "?";
}

std::optional<Variant> variant_from_string(const std::string& s) {
  if (s == "etgpssm-dnn") return Variant::etgpssm_dnn;
  if (s == "etgpssm-bnn") return Variant::etgpssm_bnn;
  if (s == "gpssm-independent") return Variant::gpssm_independent;
  if (s == "ad-enkf-dnn") return Variant::adenkf_dnn;
  if (s == "ad-enkf-bnn") return Variant::adenkf_bnn;
  return std::nullopt;
}

namespace {

bool uses_etgp(Variant v) {
  return v == Variant::etgpssm_dnn || v == Variant::etgpssm_bnn;
}
bool uses_network(Variant v) {
  return v != Variant::gpssm_independent;
}
bool bayesian_weights(Variant v) {
  return v == Variant::etgpssm_bnn || v == Variant::adenkf_bnn;
}

// ETGP transition: shared GP sample per member warped by the flow whose
// parameters the network emits at the previous state.
class EtgpTransition : public Transition {
 public:
  EtgpTransition(GpPosterior post, FlowNetDraw draw, FlowKind kind, int d_x)
      : post_(std::move(post)), draw_(std::move(draw)), kind_(kind), d_x_(d_x) {}

  int gp_noise_cols() const override { return 1; }

  Tensor mean_map(const Tensor& members, const Matrix& gp_eps) override {
    FlowParams theta = FlowNet::flow_params(draw_, members, kind_, d_x_);
    Tensor fval = SparseGP::sample(post_, members, gp_eps);  // N x 1
    return kind_ == FlowKind::linear ? linear_flow(theta, fval)
                                     : sal_flow(theta, fval);
  }

 private:
  GpPosterior post_;
  FlowNetDraw draw_;
  FlowKind kind_;
  int d_x_;
};

// Conventional GPSSM transition: one independent GP per output dimension.
class IndependentGpTransition : public Transition {
 public:
  IndependentGpTransition(std::vector<GpPosterior> posts) : posts_(std::move(posts)) {}

  int gp_noise_cols() const override { return static_cast<int>(posts_.size()); }

  Tensor mean_map(const Tensor& members, const Matrix& gp_eps) override {
    std::vector<Tensor> cols;
    cols.reserve(posts_.size());
    for (size_t d = 0; d < posts_.size(); ++d) {
      cols.push_back(SparseGP::sample(posts_[d], members, gp_eps.col(d)));
    }
    return concat_cols(cols);
  }

 private:
  std::vector<GpPosterior> posts_;
};

// Pure network transition (AD-EnKF baseline).
class NeuralTransition : public Transition {
 public:
  explicit NeuralTransition(FlowNetDraw draw) : draw_(std::move(draw)) {}
  Tensor mean_map(const Tensor& members, const Matrix&) override {
    return FlowNet::forward(draw_, members);
  }

 private:
  FlowNetDraw draw_;
};

}  // namespace

Model Model::create(const ModelConfig& cfg, RngStream& init) {
  Model m;
  m.cfg_ = cfg;
  m.ssm_ = SsmParams::create(cfg.d_x, cfg.d_y, cfg.q_init, cfg.r_init,
                             cfg.learn_c);
  if (uses_etgp(cfg.variant)) {
    m.gps_.push_back(SparseGP::create(cfg.d_x, cfg.num_inducing, init));
  } else if (cfg.variant == Variant::gpssm_independent) {
    for (int d = 0; d < cfg.d_x; ++d) {
      m.gps_.push_back(SparseGP::create(cfg.d_x, cfg.num_inducing, init));
    }
  }
  if (uses_network(cfg.variant)) {
    FlowNet::Config nc;
    nc.in_dim = cfg.d_x;
    nc.hidden1 = cfg.hidden1;
    nc.hidden2 = cfg.hidden2;
    nc.mode = bayesian_weights(cfg.variant) ? WeightMode::bayesian
                                            : WeightMode::deterministic;
    nc.learn_prior = cfg.learn_prior_psi;
    if (uses_etgp(cfg.variant)) {
      nc.out_dim = cfg.d_x * flow_params_per_dim(cfg.flow);
    } else {
      nc.out_dim = cfg.d_x;  // direct drift head
    }
    m.net_ = FlowNet::create(nc, init);
    if (uses_etgp(cfg.variant)) {
      // Start the flow near an identity warp: alpha(x) ~ 1, beta(x) ~ 0.
      Matrix b3 = m.net_->output_bias().value();
      b3.topRows(cfg.d_x).setOnes();
      m.net_->output_bias().set_value(b3);
    }
  }
  return m;
}

int Model::gp_noise_cols() const {
  if (uses_etgp(cfg_.variant)) return 1;
  if (cfg_.variant == Variant::gpssm_independent) return cfg_.d_x;
  return 0;
}

IterationDraws Model::make_draws(RngStreams& streams, int t_steps,
                                 int n_members) {
  IterationDraws d;
  if (net_) d.weight_eps = net_->draw_weight_eps(streams.weight_draws);
  d.noise = NoiseBundle::draw(streams, t_steps, n_members, cfg_.d_x, cfg_.d_y,
                              gp_noise_cols());
  return d;
}

std::unique_ptr<Transition> Model::make_transition(
    const std::vector<Matrix>& weight_eps) const {
  if (uses_etgp(cfg_.variant)) {
    return std::make_unique<EtgpTransition>(gps_[0].posterior(),
                                            net_->draw(weight_eps), cfg_.flow,
                                            cfg_.d_x);
  }
  if (cfg_.variant == Variant::gpssm_independent) {
    std::vector<GpPosterior> posts;
    posts.reserve(gps_.size());
    for (const auto& gp : gps_) posts.push_back(gp.posterior());
    return std::make_unique<IndependentGpTransition>(std::move(posts));
  }
  return std::make_unique<NeuralTransition>(net_->draw(weight_eps));
}

Tensor Model::kl_inducing() const {
  if (gps_.empty()) return Tensor::scalar(0.0);
  Tensor total = gps_[0].kl();
  for (size_t i = 1; i < gps_.size(); ++i) total = add(total, gps_[i].kl());
  return total;
}

Tensor Model::kl_weights() const {
  if (!net_) return Tensor::scalar(0.0);
  return net_->kl_weights();
}

Matrix Model::mean_transition(const Matrix& x) const {
  Tensor xs = Tensor::constant(x);
  if (uses_etgp(cfg_.variant)) {
    GpPosterior post = gps_[0].posterior();
    auto [mean, var] = SparseGP::predict(post, xs);
    FlowParams theta =
        FlowNet::flow_params(net_->mean_draw(), xs, cfg_.flow, cfg_.d_x);
    Tensor out = cfg_.flow == FlowKind::linear ? linear_flow(theta, mean)
                                               : sal_flow(theta, mean);
    return out.value();
  }
  if (cfg_.variant == Variant::gpssm_independent) {
    Matrix out(x.rows(), cfg_.d_x);
    for (int d = 0; d < cfg_.d_x; ++d) {
      GpPosterior post = gps_[d].posterior();
      auto [mean, var] = SparseGP::predict(post, xs);
      out.col(d) = mean.value().col(0);
    }
    return out;
  }
  return FlowNet::forward(net_->mean_draw(), xs).value();
}

Matrix Model::transition_variance(const Matrix& x) const {
  Tensor xs = Tensor::constant(x);
  if (uses_etgp(cfg_.variant)) {
    GpPosterior post = gps_[0].posterior();
    auto [mean, var] = SparseGP::predict(post, xs);
    FlowParams theta =
        FlowNet::flow_params(net_->mean_draw(), xs, cfg_.flow, cfg_.d_x);
    // linear flow: var[alpha f + beta] = alpha^2 var[f]; for SAL this is the
    // first-order band around the warp
    return mul(square(theta.alpha), var).value();
  }
  if (cfg_.variant == Variant::gpssm_independent) {
    Matrix out(x.rows(), cfg_.d_x);
    for (int d = 0; d < cfg_.d_x; ++d) {
      GpPosterior post = gps_[d].posterior();
      auto [mean, var] = SparseGP::predict(post, xs);
      out.col(d) = var.value().col(0);
    }
    return out;
  }
  return Matrix::Zero(x.rows(), cfg_.d_x);
}

std::vector<std::pair<std::string, Tensor>> Model::named_params() const {
  std::vector<std::pair<std::string, Tensor>> out = ssm_.named_params();
  for (size_t i = 0; i < gps_.size(); ++i) {
    const std::string p = gps_.size() == 1 ? "gp" : "gp" + std::to_string(i);
    out.emplace_back(p + ".z", gps_[i].inducing_inputs());
    out.emplace_back(p + ".m", gps_[i].variational_mean());
    out.emplace_back(p + ".s_factor", gps_[i].variational_factor());
    out.emplace_back(p + ".log_sf2", gps_[i].kernel().log_signal_variance);
    out.emplace_back(p + ".log_ls", gps_[i].kernel().log_lengthscales);
  }
  if (net_) {
    auto np = net_->named_params("net");
    out.insert(out.end(), np.begin(), np.end());
  }
  return out;
}

Model::ParamCounts Model::count_trainable() const {
  ParamCounts pc;
  for (const auto& gp : gps_) {
    pc.gp_core += gp.inducing_inputs().size() + gp.variational_mean().size() +
                  gp.variational_factor().size();
    pc.kernel += gp.kernel().log_signal_variance.size() +
                 gp.kernel().log_lengthscales.size();
  }
  if (net_) {
    pc.network = net_->weight_count();
    if (bayesian_weights(cfg_.variant)) pc.network *= 2;
  }
  for (const auto& [name, t] : named_params()) pc.total += t.size();
  return pc;
}

ElboComputation elbo(Model& model, const Matrix& y,
                     const IterationDraws& draws, const FilterOptions& opts) {
  ElboComputation out;
  auto transition = model.make_transition(draws.weight_eps);
  out.filter = run_filter(model.ssm(), *transition, y, draws.noise, opts);

  // AD-EnKF maximizes the accumulated log-likelihood directly: no inducing
  // or x0 terms apply, only the weight KL in bayesian mode.
  const bool likelihood_only = model.config().variant == Variant::adenkf_dnn ||
                               model.config().variant == Variant::adenkf_bnn;
  Tensor kl_u = model.kl_inducing();
  Tensor kl_w = model.kl_weights();
  Tensor kl_x0 =
      likelihood_only ? Tensor::scalar(0.0) : model.ssm().kl_x0();
  out.total = sub(sub(sub(out.filter.loglik, kl_u), kl_w), kl_x0);

  out.report.total = out.total.scalar_value();
  out.report.loglik = out.filter.loglik.scalar_value();
  out.report.kl_u = kl_u.scalar_value();
  out.report.kl_w = kl_w.scalar_value();
  out.report.kl_x0 = kl_x0.scalar_value();
  return out;
}

}  // namespace etg
