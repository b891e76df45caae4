#pragma once

#include "etg/rng.hpp"
#include "etg/tensor.hpp"

#include <optional>
#include <string>

namespace etg {

enum class SystemKind { kink, lorenz96, linear_gaussian_test };

struct SystemConfig {
  SystemKind kind = SystemKind::kink;
  int d_x = 1;
  double sigma_q2 = 0.05;   // kink process-noise variance
  double sigma_r2 = 0.008;  // kink observation-noise variance
  double forcing = 8.0;     // lorenz96
  double obs_var = 4.0;     // lorenz96 observation variance (R = obs_var I)
  double dt = 0.01;
  int burn_in = 500;
  int t_steps = 600;
  double kink_x0 = 0.5;
  std::uint64_t seed = 0;
};

// Per-dimension affine observation transform y -> (y - mean) / std with the
// statistics taken from the training split only.
struct Standardization {
  Vector mean;
  Vector std;
  bool active = false;

  Matrix apply(const Matrix& y) const;
  Matrix invert(const Matrix& y) const;
  static Standardization identity(int d);
};

struct Dataset {
  Matrix observations;            // T x d_y
  std::optional<Matrix> states;   // T x d_x, aligned with observations
  std::optional<Vector> x0;       // initial state when simulated
  Standardization stats;          // applied to observations
  int split_index = 0;            // first test row; == T when no test split

  int t_steps() const { return static_cast<int>(observations.rows()); }
  int d_y() const { return static_cast<int>(observations.cols()); }
  Matrix train_observations() const {
    return observations.topRows(split_index);
  }
  Matrix test_observations() const {
    return observations.bottomRows(t_steps() - split_index);
  }
};

// Non-stationary kink transition: base kink shape with an input-dependent
// slope modulation for x > 0 and a piecewise oscillatory component.
double kink_f(double x);

Dataset simulate_kink(const SystemConfig& sys);

// One Euler step of the cyclically coupled Lorenz-96 drift.
Vector lorenz96_step(const Vector& x, double dt, double forcing);

Dataset simulate_lorenz96(const SystemConfig& sys);

// CSV with a header row: observation columns named y_*, optional state
// columns prefixed x_. Throws with row/column info on non-numeric cells.
Dataset load_csv(const std::string& path);
void write_csv(const Dataset& ds, const std::string& path);

// Splits at floor(T * fraction) and standardizes observations using
// statistics of the training split; constant dimensions are left unscaled.
void split_standardize(Dataset& ds, double fraction = 0.5,
                       bool standardize = true);

}  // namespace etg
