#include "etg/runner.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace etg {

namespace fs = std::filesystem;

namespace {

void atomic_write(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
  }
  fs::rename(tmp, path);
}

std::string fmt(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string iso_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%FT%TZ", std::gmtime(&t));
  return buf;
}

SystemKind system_kind_from(const std::string& s) {
  if (s == "kink") return SystemKind::kink;
  if (s == "lorenz96") return SystemKind::lorenz96;
  if (s == "linear-gaussian") return SystemKind::linear_gaussian_test;
  throw ConfigError("unknown system.kind: " + s);
}

std::string dataset_label(const Config& cfg) {
  const std::string kind = cfg.get_string("system.kind", "kink");
  if (kind == "csv") {
    return fs::path(cfg.get_string("system.path", "")).filename().string();
  }
  return kind;
}

}  // namespace

std::filesystem::path default_output_root() {
  if (const char* env = std::getenv("ETG_OUTPUT_ROOT")) return env;
  return "runs";
}

Dataset build_dataset(const Config& cfg) {
  const std::string kind = cfg.get_string("system.kind", "kink");
  const std::uint64_t seed = static_cast<std::uint64_t>(
      cfg.get_long("system.seed", cfg.get_long("run.seed", 0)));

  Dataset ds;
  double default_split = 1.0;
  if (kind == "csv") {
    const std::string path = cfg.get_string("system.path", "");
    if (path.empty()) throw ConfigError("system.path required for csv data");
    if (!fs::exists(path)) {
      throw ConfigError("dataset file does not exist: " + path);
    }
    ds = load_csv(path);
    default_split = 0.5;
  } else {
    SystemConfig sys;
    sys.kind = system_kind_from(kind);
    sys.seed = seed;
    sys.d_x = static_cast<int>(cfg.get_long("system.dx", kind == "lorenz96" ? 20 : 1));
    sys.sigma_q2 = cfg.get_double("system.sigma_q2", 0.05);
    sys.sigma_r2 = cfg.get_double("system.sigma_r2", 0.008);
    sys.forcing = cfg.get_double("system.forcing", 8.0);
    sys.obs_var = cfg.get_double("system.obs_var", 4.0);
    sys.dt = cfg.get_double("system.dt", 0.01);
    sys.burn_in = static_cast<int>(cfg.get_long("system.burn_in", 500));
    sys.t_steps = static_cast<int>(cfg.get_long("system.T", 600));
    sys.kink_x0 = cfg.get_double("system.x0", 0.5);
    if (sys.kind == SystemKind::kink) {
      ds = simulate_kink(sys);
    } else if (sys.kind == SystemKind::lorenz96) {
      ds = simulate_lorenz96(sys);
    } else {
      throw ConfigError("linear-gaussian is a test-only system");
    }
  }
  const double split = cfg.get_double("data.split", default_split);
  const bool standardize = cfg.get_bool("data.standardize", true);
  split_standardize(ds, split, standardize);
  return ds;
}

ModelConfig resolve_model_config(const Config& cfg, const Dataset& ds) {
  ModelConfig mc;
  const std::string v = cfg.get_string("run.variant", "etgpssm-dnn");
  const auto variant = variant_from_string(v);
  if (!variant) throw ConfigError("unknown run.variant: " + v);
  mc.variant = *variant;
  mc.d_y = ds.d_y();
  mc.d_x = static_cast<int>(cfg.get_long("model.dx", mc.d_y));
  if (mc.d_x < mc.d_y) throw ConfigError("model.dx must be >= observed dim");
  mc.num_inducing = static_cast<int>(cfg.get_long("model.inducing", 20));
  const std::string flow = cfg.get_string("model.flow", "linear");
  if (flow == "linear") {
    mc.flow = FlowKind::linear;
  } else if (flow == "sal") {
    mc.flow = FlowKind::sal;
  } else {
    throw ConfigError("unknown model.flow: " + flow);
  }
  mc.q_init = cfg.get_double("model.q_init", 0.1);
  // observation-noise init at a tenth of the (standardized) empirical
  // variance of the training observations
  const Matrix train = ds.train_observations();
  double obs_var = 1.0;
  if (train.rows() > 1) {
    const Eigen::RowVectorXd mean = train.colwise().mean();
    obs_var = (train.rowwise() - mean).squaredNorm() /
              static_cast<double>(train.size() - 1);
  }
  mc.r_init = cfg.get_double("model.r_init", 0.1 * obs_var);
  mc.learn_c = cfg.get_bool("model.learn_c", false);
  mc.learn_prior_psi = cfg.get_bool("model.learn_psi", false);
  mc.hidden1 = static_cast<int>(cfg.get_long("model.hidden1", 128));
  mc.hidden2 = static_cast<int>(cfg.get_long("model.hidden2", 64));
  return mc;
}

TrainConfig resolve_train_config(const Config& cfg) {
  TrainConfig tc;
  tc.epochs = static_cast<int>(cfg.get_long("train.epochs", 1000));
  tc.learning_rate = cfg.get_double("train.lr", 0.005);
  tc.ensemble = static_cast<int>(cfg.get_long("train.ensemble", 200));
  tc.patience = static_cast<int>(cfg.get_long("train.patience", 50));
  tc.smooth_window = static_cast<int>(cfg.get_long("train.window", 10));
  tc.seed = static_cast<std::uint64_t>(cfg.get_long("run.seed", 0));
  tc.include_r_in_loglik = cfg.get_bool("train.include_r", true);
  tc.early_stopping = cfg.get_bool("train.early_stopping", true);
  return tc;
}

EvalFilter eval_filter(Model& model, const Dataset& ds, std::uint64_t seed,
                       int n_members, bool include_r) {
  NoGradGuard guard;
  RngStreams streams(seed);
  IterationDraws draws =
      model.make_draws(streams, ds.t_steps(), n_members);
  // point weights for evaluation
  for (auto& e : draws.weight_eps) e.setZero();
  auto transition = model.make_transition(draws.weight_eps);
  FilterOptions opts;
  opts.n_members = n_members;
  opts.include_r_in_loglik = include_r;
  FilterResult res =
      run_filter(model.ssm(), *transition, ds.observations, draws.noise, opts);
  EvalFilter out;
  out.loglik = res.loglik.scalar_value();
  out.ensembles.reserve(res.ensembles.size());
  for (const auto& t : res.ensembles) out.ensembles.push_back(t.value());
  return out;
}

ForecastFn make_model_forecaster(Model& model, const Dataset& ds,
                                 std::uint64_t seed, int n_members) {
  auto filtered = std::make_shared<EvalFilter>(
      eval_filter(model, ds, seed, n_members));
  const Matrix c = model.ssm().c.value();
  const Vector sqrt_q =
      model.ssm().log_q.value().col(0).array().exp().sqrt();
  auto model_ptr = &model;
  return [filtered, c, sqrt_q, model_ptr, seed](int origin, int horizon) {
    NoGradGuard guard;
    RngStream noise(seed ^ static_cast<std::uint64_t>(origin), "forecast");
    std::vector<Matrix> weight_eps;  // point weights
    auto transition = model_ptr->make_transition(weight_eps);
    Tensor members =
        Tensor::constant(filtered->ensembles.at(static_cast<size_t>(origin)));
    const int gp_cols = model_ptr->gp_noise_cols();
    Matrix pred(horizon, c.rows());
    for (int h = 0; h < horizon; ++h) {
      const Matrix gp_eps = noise.gaussian_matrix(members.rows(), gp_cols);
      Matrix q_eps = noise.gaussian_matrix(members.rows(), members.cols());
      q_eps.array().rowwise() *= sqrt_q.transpose().array();
      Tensor next = add(transition->mean_map(members, gp_eps),
                        Tensor::constant(q_eps));
      members = next;
      const Vector mean = members.value().colwise().mean();
      pred.row(h) = (c * mean).transpose();
    }
    return pred;
  };
}

FilterMetrics run_known_enkf(const Dataset& ds, const CallableTransition::Fn& f,
                             double obs_var, double q_filter, int n_members,
                             std::uint64_t seed) {
  if (!ds.states) {
    throw std::invalid_argument("run_known_enkf: needs true states");
  }
  NoGradGuard guard;
  const int d = ds.d_y();
  SsmParams ssm = SsmParams::create(d, d, q_filter, obs_var);
  ssm.m0.set_value(ds.observations.row(0).transpose());
  ssm.l0.set_value(std::sqrt(obs_var) * Matrix::Identity(d, d));

  CallableTransition transition{f};
  RngStreams streams(seed);
  NoiseBundle noise =
      NoiseBundle::draw(streams, ds.t_steps(), n_members, d, d, 0);
  FilterOptions opts;
  opts.n_members = n_members;
  FilterResult res =
      run_filter(ssm, transition, ds.observations, noise, opts);
  std::vector<Matrix> ens;
  for (size_t i = 1; i < res.ensembles.size(); ++i) {
    ens.push_back(res.ensembles[i].value());
  }
  return filter_metrics(ens, *ds.states);
}

namespace {

void write_elbo_trace(const fs::path& path, const TrainResult& tr) {
  std::ostringstream os;
  os << "epoch,total,loglik,kl_u,kl_w,kl_x0\n";
  for (const auto& r : tr.trace) {
    os << r.iteration << "," << fmt(r.total) << "," << fmt(r.loglik) << ","
       << fmt(r.kl_u) << "," << fmt(r.kl_w) << "," << fmt(r.kl_x0) << "\n";
  }
  atomic_write(path, os.str());
}

void write_filtered_csv(const fs::path& path, const Dataset& ds,
                        const std::vector<Matrix>& ensembles) {
  // rows t = 1..T in original units; ensembles[t] matches observation row t-1
  const int d = ds.d_y();
  std::ostringstream os;
  os << "t";
  const bool truth = ds.states.has_value();
  for (int j = 0; j < d; ++j) {
    if (truth) os << ",x_true_" << j;
    os << ",mean_" << j << ",lo_" << j << ",hi_" << j;
  }
  os << "\n";
  for (int t = 1; t < static_cast<int>(ensembles.size()); ++t) {
    const Matrix ens_std = ensembles[static_cast<size_t>(t)];
    const Matrix ens = ds.stats.invert(ens_std);
    os << t;
    for (int j = 0; j < d; ++j) {
      std::vector<double> col(ens.col(j).data(), ens.col(j).data() + ens.rows());
      if (truth) os << "," << fmt((*ds.states)(t - 1, j));
      os << "," << fmt(ens.col(j).mean()) << "," << fmt(quantile(col, 0.025))
         << "," << fmt(quantile(col, 0.975));
    }
    os << "\n";
  }
  atomic_write(path, os.str());
}

// Learned transition curve on a 1-d grid, in original units, with the
// +-2 sigma total band (function variance plus process noise).
void write_transition_csv(const fs::path& path, Model& model,
                          const Dataset& ds, const Config& cfg) {
  const double lo = cfg.get_double("eval.grid_lo", -3.0);
  const double hi = cfg.get_double("eval.grid_hi", 1.5);
  const int points = static_cast<int>(cfg.get_long("eval.grid_points", 301));
  const bool is_kink = cfg.get_string("system.kind", "kink") == "kink";

  Matrix grid_orig(points, 1);
  for (int i = 0; i < points; ++i) {
    grid_orig(i, 0) = lo + (hi - lo) * i / (points - 1.0);
  }
  NoGradGuard guard;
  const Matrix grid_std = ds.stats.apply(grid_orig);
  const Matrix mean_std = model.mean_transition(grid_std);
  const Matrix var_std = model.transition_variance(grid_std);
  const double q_std = model.ssm().log_q.value().array().exp()(0);
  const Matrix mean_orig = ds.stats.invert(mean_std);
  const double sd_scale = ds.stats.active ? ds.stats.std(0) : 1.0;

  std::ostringstream os;
  os << "x" << (is_kink ? ",f_true" : "") << ",f_mean,lo,hi\n";
  for (int i = 0; i < points; ++i) {
    const double band =
        2.0 * sd_scale * std::sqrt(var_std(i, 0) + q_std);
    os << fmt(grid_orig(i, 0));
    if (is_kink) os << "," << fmt(kink_f(grid_orig(i, 0)));
    os << "," << fmt(mean_orig(i, 0)) << "," << fmt(mean_orig(i, 0) - band)
       << "," << fmt(mean_orig(i, 0) + band) << "\n";
  }
  atomic_write(path, os.str());
}

std::string metrics_row(const Config& cfg, const FilterMetrics& fm,
                        double forecast, double wall_s) {
  std::ostringstream os;
  os << cfg.get_string("run.variant", "etgpssm-dnn") << ","
     << dataset_label(cfg) << "," << cfg.get_long("run.seed", 0) << ","
     << fmt(fm.rmse) << "," << fmt(fm.spread) << "," << fmt(fm.coverage) << ","
     << fmt(fm.crps) << "," << fmt(forecast) << "," << fmt(wall_s);
  return os.str();
}

}  // namespace

RunOutcome run_experiment(const Config& cfg, const fs::path& output_root) {
  const auto t_start = std::chrono::steady_clock::now();
  const std::string started = iso_now();

  Dataset ds = build_dataset(cfg);
  ModelConfig mc = resolve_model_config(cfg, ds);
  TrainConfig tc = resolve_train_config(cfg);

  std::string name = cfg.get_string("run.output", "");
  if (name.empty()) {
    name = to_string(mc.variant) + "-" + dataset_label(cfg) + "-seed" +
           std::to_string(tc.seed);
  }
  RunOutcome out;
  out.artifacts.dir = output_root / name;
  fs::create_directories(out.artifacts.dir);

  RngStream init(tc.seed, "init");
  Model model = Model::create(mc, init);
  out.training = train(model, ds.train_observations(), tc);

  // final filtering pass over the full sequence with the trained parameters
  EvalFilter ef = eval_filter(model, ds, tc.seed, tc.ensemble,
                              tc.include_r_in_loglik);
  std::vector<Matrix> posterior_ens(ef.ensembles.begin() + 1,
                                    ef.ensembles.end());
  if (ds.states) {
    std::vector<Matrix> orig;
    orig.reserve(posterior_ens.size());
    for (const auto& e : posterior_ens) orig.push_back(ds.stats.invert(e));
    out.filter = filter_metrics(orig, *ds.states);
  }

  ForecastProtocol proto;
  proto.horizon = static_cast<int>(cfg.get_long("forecast.horizon", 50));
  proto.stride = static_cast<int>(cfg.get_long("forecast.stride", 10));
  if (ds.t_steps() - ds.split_index >= proto.horizon + 1) {
    ForecastFn fc = make_model_forecaster(model, ds, tc.seed, tc.ensemble);
    out.forecast_rmse = forecast_rmse(fc, ds, proto);
  }

  // artifacts
  const auto& a = out.artifacts;
  out.artifacts.checkpoint = a.dir / "checkpoint.json";
  save_checkpoint(model, out.artifacts.checkpoint.string(), cfg.hash());
  out.artifacts.elbo_trace = a.dir / "elbo_trace.csv";
  write_elbo_trace(out.artifacts.elbo_trace, out.training);
  out.artifacts.filtered = a.dir / "filtered.csv";
  write_filtered_csv(out.artifacts.filtered, ds, ef.ensembles);
  if (mc.d_x == 1) {
    out.artifacts.transition = a.dir / "transition.csv";
    write_transition_csv(out.artifacts.transition, model, ds, cfg);
  }

  const auto t_end = std::chrono::steady_clock::now();
  out.wall_time_s = std::chrono::duration<double>(t_end - t_start).count();

  out.artifacts.metrics = a.dir / "metrics.csv";
  atomic_write(out.artifacts.metrics,
               "variant,dataset,seed,rmse,spread,coverage,crps,forecast_rmse,"
               "wall_time_seconds\n" +
                   metrics_row(cfg, out.filter, out.forecast_rmse,
                               out.wall_time_s) +
                   "\n");

  nlohmann::json manifest;
  manifest["config_hash"] = cfg.hash();
  manifest["config_canonical"] = cfg.canonical();
  manifest["seed"] = tc.seed;
  manifest["variant"] = to_string(mc.variant);
  manifest["dataset"] = {{"label", dataset_label(cfg)},
                         {"T", ds.t_steps()},
                         {"d_y", ds.d_y()},
                         {"d_x", mc.d_x},
                         {"split_index", ds.split_index},
                         {"standardized", ds.stats.active}};
  manifest["output_dir"] = a.dir.string();
  manifest["started"] = started;
  manifest["finished"] = iso_now();
  manifest["epochs_run"] = out.training.epochs_run;
  manifest["best_epoch"] = out.training.best_epoch;
  nlohmann::json artifacts = nlohmann::json::object();
  artifacts["checkpoint"] = out.artifacts.checkpoint.filename().string();
  artifacts["elbo_trace"] = out.artifacts.elbo_trace.filename().string();
  artifacts["metrics"] = out.artifacts.metrics.filename().string();
  artifacts["filtered"] = out.artifacts.filtered.filename().string();
  if (!out.artifacts.transition.empty()) {
    artifacts["transition"] = out.artifacts.transition.filename().string();
  }
  manifest["artifacts"] = artifacts;
  out.artifacts.manifest = a.dir / "manifest.json";
  atomic_write(out.artifacts.manifest, manifest.dump(1) + "\n");
  return out;
}

int run_sweep(const Config& cfg, const fs::path& output_root) {
  const std::vector<std::string> grid_keys = cfg.keys_with_prefix("grid.");
  std::vector<std::pair<std::string, std::vector<std::string>>> axes;
  for (const auto& gk : grid_keys) {
    const std::string target = gk.substr(5);
    auto values = cfg.grid_values(gk);
    if (values.empty()) throw ConfigError("empty grid axis: " + gk);
    axes.emplace_back(target, std::move(values));
  }

  std::vector<std::map<std::string, std::string>> combos;
  combos.push_back({});
  for (const auto& [key, values] : axes) {
    std::vector<std::map<std::string, std::string>> next;
    for (const auto& combo : combos) {
      for (const auto& v : values) {
        auto c = combo;
        c[key] = v;
        next.push_back(std::move(c));
      }
    }
    combos = std::move(next);
  }

  struct Row {
    std::map<std::string, std::string> combo;
    FilterMetrics fm;
    double forecast;
    bool ok;
    std::string error;
  };
  std::vector<Row> rows;
  int failures = 0;
  for (const auto& combo : combos) {
    Config run_cfg = cfg;
    std::string suffix;
    for (const auto& [k, v] : combo) {
      run_cfg.set(k, v);
      std::string key_part = k.substr(k.find('.') + 1);
      suffix += "_" + key_part + v;
    }
    if (!cfg.get_string("run.output", "").empty()) {
      run_cfg.set("run.output", cfg.get_string("run.output", "") + suffix);
    } else if (!suffix.empty()) {
      run_cfg.set("run.output",
                  run_cfg.get_string("run.variant", "etgpssm-dnn") + "-" +
                      dataset_label(run_cfg) + suffix);
    }
    Row row;
    row.combo = combo;
    try {
      RunOutcome res = run_experiment(run_cfg, output_root);
      row.fm = res.filter;
      row.forecast = res.forecast_rmse;
      row.ok = true;
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
      ++failures;
    }
    rows.push_back(std::move(row));
  }

  // aggregate over seeds within each non-seed grid cell
  auto cell_of = [](const Row& r) {
    std::string cell;
    for (const auto& [k, v] : r.combo) {
      if (k == "run.seed" || k == "system.seed") continue;
      cell += k + "=" + v + ";";
    }
    return cell;
  };
  std::map<std::string, std::vector<const Row*>> cells;
  for (const auto& r : rows) {
    if (r.ok) cells[cell_of(r)].push_back(&r);
  }
  std::ostringstream os;
  os << "cell,n,rmse_mean,rmse_std,spread_mean,spread_std,coverage_mean,"
        "coverage_std,crps_mean,crps_std,forecast_mean,forecast_std\n";
  auto mean_std = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= std::max<size_t>(1, v.size());
    double s2 = 0.0;
    for (double x : v) s2 += (x - m) * (x - m);
    return std::make_pair(
        m, v.size() > 1 ? std::sqrt(s2 / (v.size() - 1)) : 0.0);
  };
  for (const auto& [cell, members] : cells) {
    auto collect = [&](auto getter) {
      std::vector<double> v;
      for (const Row* r : members) {
        const double x = getter(*r);
        if (std::isfinite(x)) v.push_back(x);
      }
      return v;
    };
    const auto r_ = mean_std(collect([](const Row& r) { return r.fm.rmse; }));
    const auto s_ = mean_std(collect([](const Row& r) { return r.fm.spread; }));
    const auto c_ = mean_std(collect([](const Row& r) { return r.fm.coverage; }));
    const auto k_ = mean_std(collect([](const Row& r) { return r.fm.crps; }));
    const auto f_ = mean_std(collect([](const Row& r) { return r.forecast; }));
    os << '"' << cell << '"' << "," << members.size() << "," << fmt(r_.first)
       << "," << fmt(r_.second) << "," << fmt(s_.first) << "," << fmt(s_.second)
       << "," << fmt(c_.first) << "," << fmt(c_.second) << "," << fmt(k_.first)
       << "," << fmt(k_.second) << "," << fmt(f_.first) << "," << fmt(f_.second)
       << "\n";
  }
  fs::create_directories(output_root);
  atomic_write(output_root / "sweep_aggregate.csv", os.str());
  return failures;
}

}  // namespace etg
