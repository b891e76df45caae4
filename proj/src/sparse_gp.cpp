#include "etg/sparse_gp.hpp"

#include <cmath>

namespace etg {

SparseGP SparseGP::create(int input_dim, int num_inducing, RngStream& init) {
  if (num_inducing < 1) throw ShapeError("SparseGP: need at least 1 inducing point");
  SparseGP gp;
  Matrix z = init.gaussian_matrix(num_inducing, input_dim);
  // Inducing rows must be pairwise distinct; a collision from a continuous
  // draw is a sampler bug, so just check.
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < z.rows(); ++j) {
      if ((z.row(i) - z.row(j)).norm() == 0.0) {
        throw std::runtime_error("SparseGP: duplicate inducing inputs at init");
      }
    }
  }
  gp.z_ = Tensor::parameter(std::move(z));
  gp.m_ = Tensor::parameter(Matrix::Zero(num_inducing, 1));
  gp.kernel_ = SEKernel::create(input_dim);
  // q(u) starts at N(0, K_ZZ / 2): the initial KL is a finite M-dependent
  // constant regardless of how ill-conditioned K_ZZ is. An identity start
  // puts tr(K_ZZ^-1) in the KL, which blows up for clustered inducing
  // inputs in low dimensions.
  {
    const Matrix& zv = gp.z_.value();
    Matrix kzz(num_inducing, num_inducing);
    for (int i = 0; i < num_inducing; ++i) {
      for (int j = 0; j < num_inducing; ++j) {
        kzz(i, j) = gp.kernel_.eval(zv.row(i), zv.row(j));
      }
    }
    Matrix factor =
        std::sqrt(0.5) * cholesky_spd(Tensor::constant(kzz)).value();
    gp.s_factor_ = Tensor::parameter(std::move(factor));
  }
  return gp;
}

GpPosterior SparseGP::posterior() const {
  GpPosterior post;
  post.sf2 = etg::exp(kernel_.log_signal_variance);
  post.inv_ls = etg::exp(scale(kernel_.log_lengthscales, -1.0));
  post.zs = mul(z_, transpose(post.inv_ls));
  post.zsq = sum_rows(square(post.zs));

  Tensor kzz = kernel_.gram(z_, z_);
  post.l_zz = cholesky_spd(kzz);
  post.alpha = tri_solve(post.l_zz, tri_solve(post.l_zz, m_), true);

  // proj = K^-1 (K - S) K^-1 = K^-1 - K^-1 S K^-1 via triangular solves
  const Eigen::Index m = num_inducing();
  Tensor eye = Tensor::constant(Matrix::Identity(m, m));
  Tensor linv = tri_solve(post.l_zz, eye);             // L^-1
  Tensor kinv = matmul(transpose(linv), linv);         // K^-1
  Tensor f = tril(s_factor_);
  Tensor kinv_f = matmul(kinv, f);                     // K^-1 F
  post.proj = sub(kinv, matmul(kinv_f, transpose(kinv_f)));
  return post;
}

std::pair<Tensor, Tensor> SparseGP::predict(const GpPosterior& post,
                                            const Tensor& x) {
  Tensor xs = mul(x, transpose(post.inv_ls));  // n x d
  Tensor xsq = sum_rows(square(xs));           // n x 1
  Tensor cross = matmul(xs, transpose(post.zs));
  Tensor sqdist = sub(add(xsq, transpose(post.zsq)), scale(cross, 2.0));
  Tensor kxz = mul(post.sf2, etg::exp(scale(sqdist, -0.5)));  // n x M

  Tensor mean = matmul(kxz, post.alpha);  // n x 1
  Tensor quad = sum_rows(mul(matmul(kxz, post.proj), kxz));
  Tensor var_raw = sub(post.sf2, quad);  // n x 1 via broadcast

  const double lo = var_raw.value().minCoeff();
  if (lo < -1e-8) numerics_log().negative_variance_warnings++;
  return {mean, relu(var_raw)};
}

Tensor SparseGP::sample(const GpPosterior& post, const Tensor& x,
                        const Matrix& eps) {
  auto [mean, var] = predict(post, x);
  if (eps.rows() != mean.rows() || eps.cols() != 1) {
    throw ShapeError("SparseGP::sample: eps must be n x 1");
  }
  // 1e-12 floors the clamped variance so sqrt keeps a bounded derivative;
  // the induced 1e-6 stddev is negligible against any trained noise scale.
  Tensor stddev = etg::sqrt(add(var, Tensor::scalar(1e-12)));
  return add(mean, mul(stddev, Tensor::constant(eps)));
}

Tensor SparseGP::kl() const {
  GpPosterior post = posterior();
  Tensor f = tril(s_factor_);
  Tensor v = tri_solve(post.l_zz, f);   // L^-1 F
  Tensor w = tri_solve(post.l_zz, m_);  // L^-1 m
  Tensor trace_term = sum(square(v));
  Tensor quad_term = sum(square(w));
  Tensor logdet_p = scale(sum(log(diag_of(post.l_zz))), 2.0);
  Tensor logdet_q = scale(sum(log_abs(diag_of(f))), 2.0);
  Tensor m_count = Tensor::scalar(static_cast<double>(num_inducing()));
  return scale(
      add(sub(add(trace_term, quad_term), m_count), sub(logdet_p, logdet_q)),
      0.5);
}

void SparseGP::predict_joint(const Matrix& x, Vector& mean_out,
                             Matrix& cov_out) const {
  const Eigen::Index n = x.rows();
  const Eigen::Index m = num_inducing();
  const Matrix z = z_.value();
  Matrix kzz(m, m), kxz(n, m), kxx(n, n);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      kzz(i, j) = kernel_.eval(z.row(i), z.row(j));
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      kxz(i, j) = kernel_.eval(x.row(i), z.row(j));
    }
    for (Eigen::Index j = 0; j < n; ++j) {
      kxx(i, j) = kernel_.eval(x.row(i), x.row(j));
    }
  }
  Eigen::LLT<Matrix> llt(kzz);
  if (llt.info() != Eigen::Success) {
    throw CholeskyError("predict_joint: K_ZZ not positive definite");
  }
  const Matrix f = s_factor_.value().triangularView<Eigen::Lower>();
  const Matrix s = f * f.transpose();
  const Matrix a = llt.solve(kxz.transpose());  // K^-1 K_ZX
  mean_out = a.transpose() * m_.value();
  cov_out = kxx - a.transpose() * (kzz - s) * a;
}

}  // namespace etg
