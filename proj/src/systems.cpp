#include "etg/systems.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace etg {

Matrix Standardization::apply(const Matrix& y) const {
  if (!active) return y;
  Matrix out = y;
  out.rowwise() -= mean.transpose();
  out.array().rowwise() /= std.transpose().array();
  return out;
}

Matrix Standardization::invert(const Matrix& y) const {
  if (!active) return y;
  Matrix out = y;
  out.array().rowwise() *= std.transpose().array();
  out.rowwise() += mean.transpose();
  return out;
}

Standardization Standardization::identity(int d) {
  Standardization s;
  s.mean = Vector::Zero(d);
  s.std = Vector::Ones(d);
  s.active = false;
  return s;
}

double kink_f(double x) {
  const double kink = 0.8 + (x + 0.2) * (1.0 - 5.0 / (1.0 + std::exp(-2.0 * x)));
  const double s = x > 0.0 ? 1.0 - 0.5 * std::exp(-0.5 * x) : 1.0;
  const double o = x > 0.0 ? 0.5 * std::sin(8.0 * x) : 0.5 * std::sin(2.0 * x);
  return kink * s - o;
}

Dataset simulate_kink(const SystemConfig& sys) {
  RngStream rng(sys.seed, "system-kink");
  const double sq = std::sqrt(sys.sigma_q2);
  const double sr = std::sqrt(sys.sigma_r2);
  Dataset ds;
  ds.observations.resize(sys.t_steps, 1);
  Matrix states(sys.t_steps, 1);
  double x = sys.kink_x0;
  for (int t = 0; t < sys.t_steps; ++t) {
    x = kink_f(x) + sq * rng.gaussian();
    states(t, 0) = x;
    ds.observations(t, 0) = x + sr * rng.gaussian();
  }
  ds.states = states;
  ds.x0 = Vector::Constant(1, sys.kink_x0);
  ds.stats = Standardization::identity(1);
  ds.split_index = sys.t_steps;
  return ds;
}

Vector lorenz96_step(const Vector& x, double dt, double forcing) {
  const Eigen::Index d = x.size();
  if (d < 4) {
    throw std::invalid_argument("lorenz96_step: cyclic coupling needs d_x >= 4");
  }
  Vector drift(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const double xp1 = x((i + 1) % d);
    const double xm2 = x((i - 2 + d) % d);
    const double xm1 = x((i - 1 + d) % d);
    drift(i) = (xp1 - xm2) * xm1 - x(i) + forcing;
  }
  return x + dt * drift;
}

Dataset simulate_lorenz96(const SystemConfig& sys) {
  RngStream rng(sys.seed, "system-lorenz96");
  const int d = sys.d_x;
  Vector x = Vector::Constant(d, sys.forcing);
  if (d > 0) x(0) += 0.01;  // nudge off the fixed point
  for (int t = 0; t < sys.burn_in; ++t) {
    x = lorenz96_step(x, sys.dt, sys.forcing);
    if (!x.allFinite()) {
      throw std::runtime_error(
          "simulate_lorenz96: trajectory diverged during burn-in; reduce dt");
    }
  }
  Dataset ds;
  ds.observations.resize(sys.t_steps, d);
  Matrix states(sys.t_steps, d);
  ds.x0 = x;
  const double sr = std::sqrt(sys.obs_var);
  for (int t = 0; t < sys.t_steps; ++t) {
    x = lorenz96_step(x, sys.dt, sys.forcing);
    if (!x.allFinite()) {
      throw std::runtime_error("simulate_lorenz96: trajectory diverged at step " +
                               std::to_string(t) + "; reduce dt");
    }
    states.row(t) = x.transpose();
    for (int j = 0; j < d; ++j) {
      ds.observations(t, j) = x(j) + sr * rng.gaussian();
    }
  }
  ds.states = states;
  ds.stats = Standardization::identity(d);
  ds.split_index = sys.t_steps;
  return ds;
}

Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error("load_csv: empty file " + path);
  }
  std::vector<std::string> headers;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) headers.push_back(cell);
  }
  std::vector<int> y_cols, x_cols;
  for (size_t i = 0; i < headers.size(); ++i) {
    if (headers[i].rfind("x_", 0) == 0) {
      x_cols.push_back(static_cast<int>(i));
    } else {
      y_cols.push_back(static_cast<int>(i));
    }
  }
  if (y_cols.empty()) {
    throw std::runtime_error("load_csv: no observation columns in " + path);
  }

  std::vector<std::vector<double>> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    int col = 0;
    while (std::getline(ss, cell, ',')) {
      ++col;
      try {
        size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw std::runtime_error("load_csv: non-numeric cell at row " +
                                 std::to_string(line_no) + ", column " +
                                 std::to_string(col) + " in " + path);
      }
    }
    if (row.size() != headers.size()) {
      throw std::runtime_error("load_csv: row " + std::to_string(line_no) +
                               " has " + std::to_string(row.size()) +
                               " cells, expected " +
                               std::to_string(headers.size()));
    }
    rows.push_back(std::move(row));
  }

  Dataset ds;
  const int t = static_cast<int>(rows.size());
  ds.observations.resize(t, static_cast<int>(y_cols.size()));
  for (int i = 0; i < t; ++i) {
    for (size_t j = 0; j < y_cols.size(); ++j) {
      ds.observations(i, static_cast<int>(j)) = rows[i][y_cols[j]];
    }
  }
  if (!x_cols.empty()) {
    Matrix states(t, static_cast<int>(x_cols.size()));
    for (int i = 0; i < t; ++i) {
      for (size_t j = 0; j < x_cols.size(); ++j) {
        states(i, static_cast<int>(j)) = rows[i][x_cols[j]];
      }
    }
    ds.states = states;
  }
  ds.stats = Standardization::identity(ds.d_y());
  ds.split_index = t;
  return ds;
}

void write_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_csv: cannot write " + path);
  out.precision(17);
  for (int j = 0; j < ds.d_y(); ++j) {
    if (j) out << ",";
    out << "y_" << j;
  }
  if (ds.states) {
    for (int j = 0; j < ds.states->cols(); ++j) out << ",x_" << j;
  }
  out << "\n";
  for (int i = 0; i < ds.t_steps(); ++i) {
    for (int j = 0; j < ds.d_y(); ++j) {
      if (j) out << ",";
      out << ds.observations(i, j);
    }
    if (ds.states) {
      for (int j = 0; j < ds.states->cols(); ++j) out << "," << (*ds.states)(i, j);
    }
    out << "\n";
  }
}

void split_standardize(Dataset& ds, double fraction, bool standardize) {
  if (fraction <= 0.0 || fraction > 1.0) {
    throw std::invalid_argument("split_standardize: fraction must be in (0, 1]");
  }
  const int t = ds.t_steps();
  ds.split_index = std::min(t, static_cast<int>(std::floor(t * fraction)));
  if (!standardize) {
    ds.stats = Standardization::identity(ds.d_y());
    return;
  }
  const Matrix train = ds.observations.topRows(ds.split_index);
  Standardization s;
  s.mean = train.colwise().mean();
  s.std.resize(ds.d_y());
  for (int j = 0; j < ds.d_y(); ++j) {
    const double var =
        (train.col(j).array() - s.mean(j)).square().sum() /
        std::max<double>(1, train.rows() - 1);
    s.std(j) = std::sqrt(var);
    if (s.std(j) <= 0.0) s.std(j) = 1.0;  // constant column guard
  }
  s.active = true;
  ds.observations = s.apply(ds.observations);
  ds.stats = s;
}

}  // namespace etg
