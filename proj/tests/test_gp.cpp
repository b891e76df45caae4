#include <doctest.h>

#include "etg/gradcheck.hpp"
#include "etg/sparse_gp.hpp"

#include <cmath>

using namespace etg;

namespace {

// Dense re-derivation of the predictive moments by explicit matrix
// inversion, independent of the solver path in SparseGP.
void dense_predict(const SparseGP& gp, const Matrix& x, Vector& mean,
                   Vector& var) {
  const Matrix z = gp.inducing_inputs().value();
  const Eigen::Index m = z.rows();
  const Eigen::Index n = x.rows();
  Matrix kzz(m, m), kxz(n, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      kzz(i, j) = gp.kernel().eval(z.row(i), z.row(j));
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      kxz(i, j) = gp.kernel().eval(x.row(i), z.row(j));
    }
  }
  const Matrix kinv = kzz.inverse();
  const Matrix f = gp.variational_factor().value().triangularView<Eigen::Lower>();
  const Matrix s = f * f.transpose();
  mean = kxz * kinv * gp.variational_mean().value();
  var.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double kxx = gp.kernel().eval(x.row(i), x.row(i));
    var(i) = kxx - (kxz.row(i) * kinv * (kzz - s) * kinv * kxz.row(i).transpose())(0);
  }
}

SparseGP make_gp(int d, int m, std::uint64_t seed) {
  RngStream init(seed, "gp-test");
  return SparseGP::create(d, m, init);
}

}  // namespace

TEST_CASE("kernel is signal variance at zero distance") {
  SEKernel k = SEKernel::create(3, 1.7, 0.9);
  Vector x(3);
  x << 0.3, -1.2, 4.0;
  CHECK(k.eval(x, x) == doctest::Approx(1.7).epsilon(1e-12));
}

TEST_CASE("kernel matches direct evaluation and symmetry") {
  SEKernel k = SEKernel::create(2, 1.0, 1.0);
  Vector a(2), b(2);
  a << 0.0, 0.0;
  b << 1.0, 1.0;  // squared distance 2
  CHECK(k.eval(a, b) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(k.eval(a, b) == k.eval(b, a));

  // gram via tape ops agrees with the scalar oracle
  RngStream rng(1, "gram");
  Matrix x = rng.gaussian_matrix(4, 2);
  Matrix x2 = rng.gaussian_matrix(3, 2);
  Matrix g = k.gram(Tensor::constant(x), Tensor::constant(x2)).value();
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 3; ++j) {
      CHECK(g(i, j) == doctest::Approx(k.eval(x.row(i), x2.row(j))).epsilon(1e-12));
    }
  }
}

TEST_CASE("prediction at the single inducing input returns (m, S)") {
  SparseGP gp = make_gp(1, 1, 3);
  gp.variational_mean().set_value(Matrix::Constant(1, 1, 0.7));
  gp.variational_factor().set_value(Matrix::Constant(1, 1, 0.5));  // S = 0.25
  GpPosterior post = gp.posterior();
  Tensor x = Tensor::constant(gp.inducing_inputs().value());
  auto [mean, var] = SparseGP::predict(post, x);
  CHECK(mean.value()(0, 0) == doctest::Approx(0.7).epsilon(1e-10));
  CHECK(var.value()(0, 0) == doctest::Approx(0.25).epsilon(1e-10));
}

TEST_CASE("q(u) = p(u) recovers the prior moments") {
  SparseGP gp = make_gp(2, 4, 4);
  // set S = K_ZZ via its Cholesky factor, m = 0
  GpPosterior post0 = gp.posterior();
  gp.variational_factor().set_value(post0.l_zz.value());
  GpPosterior post = gp.posterior();
  RngStream rng(5, "query");
  Tensor x = Tensor::constant(rng.gaussian_matrix(6, 2));
  auto [mean, var] = SparseGP::predict(post, x);
  const double sf2 = std::exp(gp.kernel().log_signal_variance.value()(0, 0));
  CHECK(mean.value().cwiseAbs().maxCoeff() < 1e-12);
  for (int i = 0; i < 6; ++i) {
    CHECK(var.value()(i, 0) == doctest::Approx(sf2).epsilon(1e-9));
  }
}

TEST_CASE("random instance matches the dense-inverse oracle") {
  SparseGP gp = make_gp(2, 3, 7);
  RngStream rng(8, "vals");
  gp.variational_mean().set_value(rng.gaussian_matrix(3, 1));
  Matrix f = rng.gaussian_matrix(3, 3);
  f.diagonal().array() = f.diagonal().array().abs() + 0.5;
  gp.variational_factor().set_value(f);
  GpPosterior post = gp.posterior();
  Matrix x = rng.gaussian_matrix(5, 2);
  auto [mean, var] = SparseGP::predict(post, Tensor::constant(x));
  Vector dense_mean, dense_var;
  dense_predict(gp, x, dense_mean, dense_var);
  CHECK((mean.value().col(0) - dense_mean).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((var.value().col(0) - dense_var).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("sampling: eps 0 gives the mean, zero variance ignores eps") {
  SparseGP gp = make_gp(1, 3, 9);
  RngStream rng(10, "m");
  gp.variational_mean().set_value(rng.gaussian_matrix(3, 1));
  GpPosterior post = gp.posterior();
  Matrix x = rng.gaussian_matrix(4, 1);
  Tensor xt = Tensor::constant(x);
  auto [mean, var] = SparseGP::predict(post, xt);
  Tensor s0 = SparseGP::sample(post, xt, Matrix::Zero(4, 1));
  CHECK((s0.value() - mean.value()).cwiseAbs().maxCoeff() < 1e-12);

  // degenerate posterior: S = 0 makes the variance vanish at the inducing
  // inputs, so the draw there no longer depends on eps
  gp.variational_factor().set_value(Matrix::Zero(3, 3));
  GpPosterior post0 = gp.posterior();
  Tensor zq = Tensor::constant(gp.inducing_inputs().value());
  Tensor s1 = SparseGP::sample(post0, zq, Matrix::Constant(3, 1, 5.0));
  Tensor s2 = SparseGP::sample(post0, zq, Matrix::Constant(3, 1, -5.0));
  CHECK((s1.value() - s2.value()).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("sample moments match the predictive moments") {
  SparseGP gp = make_gp(1, 3, 11);
  RngStream rng(12, "mc");
  gp.variational_mean().set_value(rng.gaussian_matrix(3, 1));
  GpPosterior post = gp.posterior();
  Matrix x(1, 1);
  x << 0.4;
  Tensor xt = Tensor::constant(x);
  auto [mean, var] = SparseGP::predict(post, xt);
  const double mu = mean.value()(0, 0);
  const double v = var.value()(0, 0);

  const int n = 100000;
  double acc = 0.0, acc2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double s =
        SparseGP::sample(post, xt, Matrix::Constant(1, 1, rng.gaussian()))
            .value()(0, 0);
    acc += s;
    acc2 += s * s;
  }
  const double emp_mean = acc / n;
  const double emp_var = acc2 / n - emp_mean * emp_mean;
  const double se_mean = std::sqrt(v / n);
  const double se_var = v * std::sqrt(2.0 / (n - 1));
  CHECK(std::abs(emp_mean - mu) < 3 * se_mean);
  CHECK(std::abs(emp_var - v) < 3 * se_var);
}

TEST_CASE("KL at the prior is exactly zero, elsewhere positive") {
  SparseGP gp = make_gp(2, 4, 13);
  GpPosterior post = gp.posterior();
  gp.variational_factor().set_value(post.l_zz.value());
  CHECK(gp.kl().scalar_value() == 0.0);

  // perturb the mean
  gp.variational_mean().set_value(Matrix::Constant(4, 1, 0.3));
  CHECK(gp.kl().scalar_value() > 0.0);
  gp.variational_mean().set_value(Matrix::Zero(4, 1));
  // perturb the factor
  gp.variational_factor().set_value(post.l_zz.value() * 1.2);
  CHECK(gp.kl().scalar_value() > 0.0);
}

TEST_CASE("one-dimensional KL has the closed-form value one half") {
  SparseGP gp = make_gp(1, 1, 14);
  // K_ZZ = 1 via unit signal variance; S = 1, m = 1
  gp.kernel().log_signal_variance.set_value(Matrix::Zero(1, 1));
  gp.variational_mean().set_value(Matrix::Constant(1, 1, 1.0));
  gp.variational_factor().set_value(Matrix::Constant(1, 1, 1.0));
  CHECK(gp.kl().scalar_value() == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("KL matches a Monte Carlo estimate") {
  SparseGP gp = make_gp(1, 2, 15);
  RngStream rng(16, "klmc");
  gp.variational_mean().set_value(0.5 * rng.gaussian_matrix(2, 1));
  Matrix f(2, 2);
  f << 0.9, 0.0, 0.2, 0.8;
  gp.variational_factor().set_value(f);
  const double kl = gp.kl().scalar_value();

  // MC estimate of E_q[log q - log p]
  GpPosterior post = gp.posterior();
  const Matrix l_p = post.l_zz.value();
  const Matrix m = gp.variational_mean().value();
  const int n = 1000000;
  const double logdet_q = std::log(std::abs(f(0, 0))) + std::log(std::abs(f(1, 1)));
  const double logdet_p = std::log(l_p(0, 0)) + std::log(l_p(1, 1));
  double acc = 0.0, acc2 = 0.0;
  for (int i = 0; i < n; ++i) {
    Vector eps = rng.gaussian_matrix(2, 1);
    Vector u = m + f * eps;
    const double log_q = -0.5 * eps.squaredNorm() - logdet_q;
    Vector w = l_p.triangularView<Eigen::Lower>().solve(u);
    const double log_p = -0.5 * w.squaredNorm() - logdet_p;
    const double v = log_q - log_p;
    acc += v;
    acc2 += v * v;
  }
  const double mc = acc / n;
  const double se = std::sqrt((acc2 / n - mc * mc) / n);
  CHECK(std::abs(kl - mc) < 3 * se);
}

TEST_CASE("posterior variance never exceeds the prior when S <= K_ZZ") {
  SparseGP gp = make_gp(2, 4, 17);
  RngStream rng(18, "q2");
  const Matrix x = rng.gaussian_matrix(10, 2);
  const double sf2 = std::exp(gp.kernel().log_signal_variance.value()(0, 0));
  for (double c : {0.25, 0.5, 1.0}) {
    GpPosterior post0 = gp.posterior();
    gp.variational_factor().set_value(std::sqrt(c) * post0.l_zz.value());
    auto [mean, var] = SparseGP::predict(gp.posterior(), Tensor::constant(x));
    CHECK(var.value().maxCoeff() <= sf2 + 1e-10);
  }
}

TEST_CASE("all GP operations pass gradient checks") {
  SparseGP gp = make_gp(2, 3, 19);
  RngStream rng(20, "g");
  gp.variational_mean().set_value(rng.gaussian_matrix(3, 1));
  Matrix f = rng.gaussian_matrix(3, 3);
  f.diagonal().array() = f.diagonal().array().abs() + 0.7;
  gp.variational_factor().set_value(f);
  const Matrix x = rng.gaussian_matrix(4, 2);
  const Matrix eps = rng.gaussian_matrix(4, 1);

  auto predict_loss = [&] {
    auto [mean, var] = SparseGP::predict(gp.posterior(), Tensor::constant(x));
    return add(sum(square(mean)), sum(var));
  };
  auto sample_loss = [&] {
    return sum(square(
        SparseGP::sample(gp.posterior(), Tensor::constant(x), eps)));
  };
  auto kl_loss = [&] { return gp.kl(); };

  struct Item {
    const char* name;
    Tensor param;
  };
  const Item items[] = {
      {"Z", gp.inducing_inputs()},
      {"m", gp.variational_mean()},
      {"S factor", gp.variational_factor()},
      {"log sf2", gp.kernel().log_signal_variance},
      {"log ls", gp.kernel().log_lengthscales},
  };
  for (const auto& item : items) {
    INFO("param: " << item.name);
    CHECK(finite_difference_check(item.param, predict_loss, 1e-5) < 1e-4);
    CHECK(finite_difference_check(item.param, sample_loss, 1e-5) < 1e-4);
    CHECK(finite_difference_check(item.param, kl_loss, 1e-5) < 1e-4);
  }
}
