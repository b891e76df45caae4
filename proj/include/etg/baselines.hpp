#pragma once

#include "etg/model.hpp"

namespace etg {

// Parameter counts in the reporting convention used by the scaling study:
// per GP, M inducing inputs of width d_x, M variational means, an M x M
// covariance, and 3 kernel-side scalars (signal variance, one lengthscale,
// one noise scalar); the network term counts the d_x -> 128 -> 64 -> 2 d_x
// layers with biases.
struct CountBreakdown {
  long gp_term = 0;
  long nn_term = 0;
  long total = 0;
};

CountBreakdown count_parameters_breakdown(Variant v, int d_x, int m_inducing);
long count_parameters(Variant v, int d_x, int m_inducing);

// Median wall time of one ensemble-transition evaluation, including the
// per-iteration posterior assembly that training repeats every step of the
// optimizer (kernel Gram, Cholesky, projection). Runs `reps` timed
// repetitions after warm-up.
double time_transition_median_s(Variant v, int d_x, int m_inducing,
                                int reps = 31, int n_members = 200,
                                std::uint64_t seed = 0);

}  // namespace etg
