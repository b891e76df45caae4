#include <CLI11.hpp>

#include "etg/baselines.hpp"
#include "etg/runner.hpp"

#include <iostream>

namespace {

using namespace etg;

// CLI overrides layered on top of the config file.
struct CommonOpts {
  std::string config_path;
  std::vector<std::string> sets;
  long seed = -1;
  std::string variant;
  std::string system;
  long dx = -1;
  std::string output;
};

Config load_config(const CommonOpts& o) {
  Config cfg = o.config_path.empty() ? Config{}
                                     : Config::parse_file(o.config_path);
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("--set expects key=value, got: " + kv);
    }
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed >= 0) cfg.set("run.seed", std::to_string(o.seed));
  if (!o.variant.empty()) cfg.set("run.variant", o.variant);
  if (!o.system.empty()) cfg.set("system.kind", o.system);
  if (o.dx >= 0) {
    cfg.set("system.dx", std::to_string(o.dx));
    cfg.set("model.dx", std::to_string(o.dx));
  }
  if (!o.output.empty()) cfg.set("run.output", o.output);
  return cfg;
}

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "config file (key = value sections)");
  cmd->add_option("--set", o.sets, "override config entries, section.key=value");
  cmd->add_option("--seed", o.seed, "run seed");
  cmd->add_option("--variant", o.variant,
                  "etgpssm-dnn|etgpssm-bnn|gpssm-independent|ad-enkf-dnn|ad-enkf-bnn");
  cmd->add_option("--system", o.system, "kink|lorenz96|csv");
  cmd->add_option("--dx", o.dx, "latent state dimension");
  cmd->add_option("--output", o.output, "run directory name");
}

int cmd_run(const CommonOpts& o) {
  Config cfg = load_config(o);
  RunOutcome out = run_experiment(cfg, default_output_root());
  std::cout << "run complete: " << out.artifacts.dir.string() << "\n"
            << "  epochs " << out.training.epochs_run << " (best "
            << out.training.best_epoch << ")";
  if (std::isfinite(out.filter.rmse)) {
    std::cout << ", rmse " << out.filter.rmse;
  }
  if (std::isfinite(out.forecast_rmse)) {
    std::cout << ", forecast rmse " << out.forecast_rmse;
  }
  std::cout << ", wall " << out.wall_time_s << " s\n";
  return 0;
}

int cmd_sweep(const CommonOpts& o) {
  Config cfg = load_config(o);
  const int failures = run_sweep(cfg, default_output_root());
  std::cout << "sweep complete, " << failures << " failed run(s)\n";
  return failures == 0 ? 0 : 1;
}

int cmd_simulate(const CommonOpts& o, const std::string& out_path) {
  Config cfg = load_config(o);
  cfg.set("data.standardize", "false");  // emit raw units
  Dataset ds = build_dataset(cfg);
  write_csv(ds, out_path);
  std::cout << "wrote " << ds.t_steps() << " rows to " << out_path << "\n";
  return 0;
}

int cmd_count_params(int dx_max, int m_inducing) {
  std::cout << "d_x,etgpssm,gpssm_independent\n";
  for (int d = 1; d <= dx_max; ++d) {
    std::cout << d << ","
              << count_parameters(Variant::etgpssm_dnn, d, m_inducing) << ","
              << count_parameters(Variant::gpssm_independent, d, m_inducing)
              << "\n";
  }
  return 0;
}

int cmd_time_transition(const std::vector<long>& dims, int m_inducing,
                        int reps, int n_members, long seed) {
  std::cout << "variant,d_x,M,param_count,median_seconds\n";
  for (const Variant v :
       {Variant::etgpssm_dnn, Variant::gpssm_independent}) {
    for (long d : dims) {
      const double t = time_transition_median_s(
          v, static_cast<int>(d), m_inducing, reps, n_members,
          static_cast<std::uint64_t>(seed));
      std::cout << to_string(v) << "," << d << "," << m_inducing << ","
                << count_parameters(v, static_cast<int>(d), m_inducing) << ","
                << t << "\n";
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ETGPSSM experiment runner"};
  app.require_subcommand(1);

  CommonOpts run_opts, sweep_opts, sim_opts;
  std::string sim_out = "dataset.csv";
  int dx_max = 100, m_inducing = 100;
  std::vector<long> time_dims = {5, 50};
  int time_reps = 31, time_members = 200;
  long time_seed = 0;

  CLI::App* run = app.add_subcommand("run", "train and evaluate one model");
  add_common(run, run_opts);
  CLI::App* sweep = app.add_subcommand("sweep", "grid of runs from [grid] keys");
  add_common(sweep, sweep_opts);
  CLI::App* sim = app.add_subcommand("simulate", "emit a synthetic dataset CSV");
  add_common(sim, sim_opts);
  sim->add_option("--out", sim_out, "output CSV path");
  CLI::App* count = app.add_subcommand("count-params", "parameter-count table");
  count->add_option("--dx-max", dx_max, "largest state dimension");
  count->add_option("--inducing", m_inducing, "inducing point count");
  CLI::App* timing =
      app.add_subcommand("time-transition", "transition timing table");
  timing->add_option("--dx", time_dims, "state dimensions to time");
  timing->add_option("--inducing", m_inducing, "inducing point count");
  timing->add_option("--reps", time_reps, "timed repetitions");
  timing->add_option("--ensemble", time_members, "ensemble size");
  timing->add_option("--seed", time_seed, "seed");

  try {
    app.parse(argc, argv);
    if (run->parsed()) return cmd_run(run_opts);
    if (sweep->parsed()) return cmd_sweep(sweep_opts);
    if (sim->parsed()) return cmd_simulate(sim_opts, sim_out);
    if (count->parsed()) return cmd_count_params(dx_max, m_inducing);
    if (timing->parsed()) {
      return cmd_time_transition(time_dims, m_inducing, time_reps,
                                 time_members, time_seed);
    }
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  } catch (const etg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
