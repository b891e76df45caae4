#pragma once

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace etg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Thrown on operand shape violations (programming errors at call sites).
struct ShapeError : std::invalid_argument {
  explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

// Thrown when a matrix factorization fails; callers may retry with jitter.
struct CholeskyError : std::runtime_error {
  explicit CholeskyError(const std::string& what) : std::runtime_error(what) {}
};

// Per-thread counters for numerical events worth surfacing in run logs.
struct NumericsLog {
  long cholesky_jitter_retries = 0;
  long negative_variance_warnings = 0;
  long skipped_optimizer_steps = 0;
  void reset() { *this = NumericsLog{}; }
};
NumericsLog& numerics_log();

namespace detail {

struct Node {
  Matrix value;
  Matrix grad;  // sized lazily during backward; persistent for parameters
  bool requires_grad = false;
  bool is_param = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  ~Node();  // iterative teardown, long graphs must not recurse

  // Accumulates g into parents[i].grad (allocating on first touch).
  void accumulate(size_t i, const Matrix& g);
};

}  // namespace detail

// Matrix-valued node of a dynamically recorded computation graph. Values are
// immutable once created; gradients are produced by backward() from a scalar
// root. Scalars are 1x1, column vectors n x 1.
class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Matrix v);
  static Tensor scalar(double v);
  static Tensor parameter(Matrix v);

  bool defined() const { return node_ != nullptr; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  Eigen::Index size() const { return node_->value.size(); }
  const Matrix& value() const { return node_->value; }
  double scalar_value() const;

  bool requires_grad() const { return node_->requires_grad; }
  bool is_parameter() const { return node_->is_param; }

  // Gradient accumulated by the latest backward pass. Zero-shaped parameters
  // that were unreachable from the root report an all-zero gradient.
  Matrix grad() const;
  void zero_grad();

  // Overwrites a parameter value in place (optimizer use, between graphs).
  void set_value(const Matrix& v);

  std::shared_ptr<detail::Node> node() const { return node_; }
  static Tensor from_node(std::shared_ptr<detail::Node> n);

 private:
  std::shared_ptr<detail::Node> node_;
};

// Reverse-mode pass from a scalar root. Every reachable node that requires a
// gradient receives one; each pass first clears previously accumulated
// gradients on the reachable set, so repeated calls are bit-identical.
void backward(const Tensor& root);

// While alive, newly created ops record no graph: results are plain values.
// Used by inference-only paths (forecast roll-outs, metrics) so memory stays
// flat over long horizons.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// ---- op set ---------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise, broadcasting
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor scale(const Tensor& a, double c);

Tensor sum(const Tensor& a);        // all entries -> 1x1
Tensor sum_rows(const Tensor& a);   // row sums -> n x 1
Tensor sum_cols(const Tensor& a);   // column sums -> 1 x m
Tensor mean(const Tensor& a);       // 1x1
Tensor mean_cols(const Tensor& a);  // column means -> 1 x m

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor log_abs(const Tensor& a);  // log|x|, gradient 1/x
Tensor softplus(const Tensor& a);
Tensor sinh(const Tensor& a);
Tensor asinh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sqrt(const Tensor& a);

// Lower Cholesky factor of the symmetric part of a. Throws CholeskyError if
// the matrix is not numerically positive definite.
Tensor cholesky(const Tensor& a);

// Cholesky with the retry policy: on failure adds diagonal jitter of
// 1e-6 * mean(diag), escalating tenfold up to 1e-2 * mean(diag).
Tensor cholesky_spd(const Tensor& a);

// Solves L x = b (lower triangular) or L^T x = b when transpose_l is set.
Tensor tri_solve(const Tensor& l, const Tensor& b, bool transpose_l = false);

Tensor slice(const Tensor& a, Eigen::Index r0, Eigen::Index c0,
             Eigen::Index nr, Eigen::Index nc);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor broadcast_to(const Tensor& a, Eigen::Index r, Eigen::Index c);

Tensor tril(const Tensor& a);
Tensor diag_of(const Tensor& a);    // n x n -> n x 1
Tensor diag_from(const Tensor& a);  // n x 1 -> n x n

// Fused x * w^T + 1 b^T with optional ReLU; the workhorse of MLP layers.
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b,
              bool relu_after = false);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double c) { return scale(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return scale(a, c); }
inline Tensor operator-(const Tensor& a) { return scale(a, -1.0); }

}  // namespace etg
