#include <doctest.h>

#include "etg/runner.hpp"

#include <fstream>

using namespace etg;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

const char* kTinyKink = R"(
[run]
variant = etgpssm-dnn
seed = 0

[system]
kind = kink
T = 30
sigma_r2 = 0.008

[model]
inducing = 3
hidden1 = 8
hidden2 = 4

[train]
epochs = 3
ensemble = 10
)";

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// metrics.csv with the volatile wall-time column removed
std::string metrics_without_walltime(const fs::path& p) {
  std::string text = read_file(p);
  std::string out;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    const auto comma = line.rfind(',');
    out += line.substr(0, comma) + "\n";
  }
  return out;
}

}  // namespace

TEST_CASE("config parsing, canonical form and hashing") {
  Config cfg = Config::parse_text("[a]\nx = 1\n# comment\n[b]\ny = two\n", "t");
  CHECK(cfg.get_long("a.x", 0) == 1);
  CHECK(cfg.get_string("b.y", "") == "two");
  CHECK(cfg.canonical() == "a.x=1\nb.y=two\n");

  Config reordered = Config::parse_text("[b]\ny = two\n[a]\nx = 1\n", "t");
  CHECK(cfg.hash() == reordered.hash());

  CHECK_THROWS_AS(Config::parse_text("nonsense line\n", "t"), ConfigError);
  CHECK_THROWS_AS(cfg.get_long("b.y", 0), ConfigError);

  Config grid = Config::parse_text("[grid]\nseed = 0..3\nnoise = 0.1, 0.2\n", "t");
  CHECK(grid.grid_values("grid.seed") ==
        std::vector<std::string>{"0", "1", "2", "3"});
  CHECK(grid.grid_values("grid.noise") ==
        std::vector<std::string>{"0.1", "0.2"});
}

TEST_CASE("missing dataset path fails as a config error") {
  Config cfg = Config::parse_text(
      "[system]\nkind = csv\npath = /nonexistent/data.csv\n", "t");
  try {
    build_dataset(cfg);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("/nonexistent/data.csv") !=
          std::string::npos);
  }
}

TEST_CASE("a run emits all artifacts and reruns byte-identically") {
  const fs::path out_root = fresh_dir("etg_run_test");
  Config cfg = Config::parse_text(kTinyKink, "tiny");

  RunOutcome first = run_experiment(cfg, out_root);
  CHECK(fs::exists(first.artifacts.manifest));
  CHECK(fs::exists(first.artifacts.checkpoint));
  CHECK(fs::exists(first.artifacts.elbo_trace));
  CHECK(fs::exists(first.artifacts.metrics));
  CHECK(fs::exists(first.artifacts.filtered));
  CHECK(fs::exists(first.artifacts.transition));

  const std::string metrics_1 = metrics_without_walltime(first.artifacts.metrics);
  const std::string trace_1 = read_file(first.artifacts.elbo_trace);
  const std::string ckpt_1 = read_file(first.artifacts.checkpoint);

  RunOutcome second = run_experiment(cfg, out_root);
  CHECK(metrics_without_walltime(second.artifacts.metrics) == metrics_1);
  CHECK(read_file(second.artifacts.elbo_trace) == trace_1);
  CHECK(read_file(second.artifacts.checkpoint) == ckpt_1);

  // filtering beat is recorded in the metrics row
  CHECK(first.filter.rmse > 0.0);
}

TEST_CASE("sweep expands the grid and aggregates over seeds") {
  const fs::path out_root = fresh_dir("etg_sweep_test");
  std::string text = std::string(kTinyKink) +
                     "\n[grid]\nrun.seed = 0..2\nsystem.sigma_r2 = 0.008, 0.08\n";
  Config cfg = Config::parse_text(text, "sweep");
  const int failures = run_sweep(cfg, out_root);
  CHECK(failures == 0);

  // 6 runs, 2 aggregate cells
  int run_dirs = 0;
  for (const auto& entry : fs::directory_iterator(out_root)) {
    if (entry.is_directory()) ++run_dirs;
  }
  CHECK(run_dirs == 6);

  const std::string agg = read_file(out_root / "sweep_aggregate.csv");
  CHECK(agg.find("rmse_mean") != std::string::npos);
  CHECK(agg.find("rmse_std") != std::string::npos);
  int lines = 0;
  for (char c : agg) lines += c == '\n';
  CHECK(lines == 3);  // header + 2 cells
}

TEST_CASE("empty grid keeps a single run") {
  const fs::path out_root = fresh_dir("etg_sweep_single");
  Config cfg = Config::parse_text(kTinyKink, "single");
  CHECK(run_sweep(cfg, out_root) == 0);
  int run_dirs = 0;
  for (const auto& entry : fs::directory_iterator(out_root)) {
    if (entry.is_directory()) ++run_dirs;
  }
  CHECK(run_dirs == 1);
}

TEST_CASE("known-dynamics enkf tracks a linear system") {
  // y = x + noise around a contraction; the known-model filter must land
  // well under the observation error
  RngStream sim(101, "lin");
  const int t_steps = 80;
  Matrix y(t_steps, 2), truth(t_steps, 2);
  Vector x = Vector::Zero(2);
  Matrix a(2, 2);
  a << 0.9, 0.05, -0.05, 0.85;
  for (int t = 0; t < t_steps; ++t) {
    x = a * x + 0.1 * Vector(sim.gaussian_matrix(2, 1));
    truth.row(t) = x.transpose();
    y.row(t) = (x + 0.8 * Vector(sim.gaussian_matrix(2, 1))).transpose();
  }
  Dataset ds;
  ds.observations = y;
  ds.states = truth;
  ds.stats = Standardization::identity(2);
  ds.split_index = t_steps;

  FilterMetrics fm = run_known_enkf(
      ds, [a](const Matrix& m) { return Matrix(m * a.transpose()); },
      0.64, 0.01, 400, 7);
  const double obs_rmse = rmse(y, truth);
  CHECK(fm.rmse < obs_rmse);
}
