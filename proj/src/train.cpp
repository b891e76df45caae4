#include "etg/train.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>

namespace etg {

namespace {

double smoothed_tail(const std::vector<ElboReport>& trace, int window) {
  const int n = static_cast<int>(trace.size());
  const int k = std::min(window, n);
  double acc = 0.0;
  for (int i = n - k; i < n; ++i) acc += trace[i].total;
  return acc / k;
}

std::map<std::string, Matrix> snapshot(const Model& model) {
  std::map<std::string, Matrix> values;
  for (const auto& [name, t] : model.named_params()) values[name] = t.value();
  return values;
}

void restore(Model& model, const std::map<std::string, Matrix>& values) {
  for (auto& [name, t] : model.named_params()) t.set_value(values.at(name));
}

}  // namespace

TrainResult train(Model& model, const Matrix& y, const TrainConfig& cfg) {
  RngStreams streams(cfg.seed);
  std::vector<Tensor> params;
  for (auto& [name, t] : model.named_params()) params.push_back(t);
  AdamConfig ac;
  ac.lr = cfg.learning_rate;
  Adam opt(params, ac);

  FilterOptions fopts;
  fopts.n_members = cfg.ensemble;
  fopts.include_r_in_loglik = cfg.include_r_in_loglik;

  TrainResult res;
  std::map<std::string, Matrix> best = snapshot(model);
  double best_smoothed = -std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  int stall = 0;
  int consecutive_skips = 0;

  const int t_steps = static_cast<int>(y.rows());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    IterationDraws draws = model.make_draws(streams, t_steps, cfg.ensemble);
    ElboComputation comp = elbo(model, y, draws, fopts);
    comp.report.iteration = epoch;

    if (!std::isfinite(comp.report.total)) {
      numerics_log().skipped_optimizer_steps++;
      res.skipped_steps++;
      if (++consecutive_skips >= 3) {
        throw std::runtime_error(
            "train: three consecutive non-finite ELBO evaluations at epoch " +
            std::to_string(epoch));
      }
      res.trace.push_back(comp.report);
      res.epochs_run = epoch + 1;
      continue;
    }
    consecutive_skips = 0;

    opt.zero_grad();
    backward(scale(comp.total, -1.0));  // ascent via negated loss
    if (!opt.step()) res.skipped_steps++;

    res.trace.push_back(comp.report);
    res.epochs_run = epoch + 1;

    const double smoothed = smoothed_tail(res.trace, cfg.smooth_window);
    if (smoothed > best_smoothed) {
      best_smoothed = smoothed;
      best_epoch = epoch;
      best = snapshot(model);
      stall = 0;
    } else if (cfg.early_stopping && ++stall >= cfg.patience) {
      break;
    }
  }

  restore(model, best);
  res.best_epoch = best_epoch;
  res.best_smoothed = best_smoothed;
  return res;
}

void save_checkpoint(const Model& model, const std::string& path,
                     const std::string& config_hash) {
  nlohmann::json j;
  j["format"] = "etg-checkpoint-v1";
  j["config_hash"] = config_hash;
  j["variant"] = to_string(model.config().variant);
  nlohmann::json params = nlohmann::json::object();
  for (const auto& [name, t] : model.named_params()) {
    nlohmann::json entry;
    entry["rows"] = t.rows();
    entry["cols"] = t.cols();
    std::vector<double> data(t.value().data(),
                             t.value().data() + t.value().size());
    entry["data"] = data;  // column-major
    params[name] = entry;
  }
  j["params"] = params;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_checkpoint: cannot write " + path);
  out << j.dump(1) << "\n";
}

void load_checkpoint(Model& model, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_checkpoint: cannot read " + path);
  nlohmann::json j;
  in >> j;
  if (j.value("format", "") != "etg-checkpoint-v1") {
    throw std::runtime_error("load_checkpoint: unknown format in " + path);
  }
  const auto& params = j.at("params");
  for (auto& [name, t] : model.named_params()) {
    const auto& entry = params.at(name);
    const Eigen::Index rows = entry.at("rows").get<Eigen::Index>();
    const Eigen::Index cols = entry.at("cols").get<Eigen::Index>();
    if (rows != t.rows() || cols != t.cols()) {
      throw std::runtime_error("load_checkpoint: shape mismatch for " + name);
    }
    const auto data = entry.at("data").get<std::vector<double>>();
    Matrix v = Eigen::Map<const Matrix>(data.data(), rows, cols);
    t.set_value(v);
  }
}

}  // namespace etg
