#include "etg/baselines.hpp"

#include <algorithm>
#include <chrono>

namespace etg {

CountBreakdown count_parameters_breakdown(Variant v, int d_x, int m_inducing) {
  const long m = m_inducing;
  const long d = d_x;
  CountBreakdown cb;
  switch (v) {
    case Variant::etgpssm_dnn:
    case Variant::etgpssm_bnn:
      cb.gp_term = m * d + 3 + m + m * m;
      cb.nn_term = 258 * d + 8384;
      break;
    case Variant::gpssm_independent:
      cb.gp_term = m * d * d + (3 + m + m * m) * d;
      cb.nn_term = 0;
      break;
    default:
      throw std::invalid_argument(
          "count_parameters: defined for etgpssm and gpssm-independent");
  }
  cb.total = cb.gp_term + cb.nn_term;
  return cb;
}

long count_parameters(Variant v, int d_x, int m_inducing) {
  return count_parameters_breakdown(v, d_x, m_inducing).total;
}

double time_transition_median_s(Variant v, int d_x, int m_inducing, int reps,
                                int n_members, std::uint64_t seed) {
  if (reps < 1) throw std::invalid_argument("time_transition: reps < 1");
  RngStream init(seed, "timing-init");
  ModelConfig mc;
  mc.variant = v;
  mc.d_x = d_x;
  mc.d_y = d_x;
  mc.num_inducing = m_inducing;
  Model model = Model::create(mc, init);

  RngStream noise(seed, "timing-noise");
  const Matrix members = noise.gaussian_matrix(n_members, d_x);
  const Matrix gp_eps =
      noise.gaussian_matrix(n_members, std::max(1, model.gp_noise_cols()));
  RngStreams streams(seed);
  const std::vector<Matrix> weight_eps =
      model.make_draws(streams, 0, 1).weight_eps;

  auto evaluate = [&] {
    auto transition = model.make_transition(weight_eps);
    Tensor out = transition->mean_map(
        Tensor::constant(members),
        gp_eps.leftCols(std::max(0, model.gp_noise_cols())));
    return out.value()(0, 0);
  };

  for (int i = 0; i < 3; ++i) (void)evaluate();  // warm-up

  std::vector<double> times;
  times.reserve(reps);
  volatile double sink = 0.0;
  for (int i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    sink = sink + evaluate();
    const auto t1 = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  std::sort(times.begin(), times.end());
  return times[times.size() / 2];
}

}  // namespace etg
