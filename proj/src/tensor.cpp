#include "etg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace etg {

NumericsLog& numerics_log() {
  thread_local NumericsLog log;
  return log;
}

namespace detail {

Node::~Node() {
  // Steal sole-owner parents into an explicit stack so that chains of
  // thousands of nodes unwind without deep recursion.
  std::vector<std::shared_ptr<Node>> stack;
  for (auto& p : parents) {
    if (p && p.use_count() == 1) stack.push_back(std::move(p));
  }
  parents.clear();
  while (!stack.empty()) {
    std::shared_ptr<Node> n = std::move(stack.back());
    stack.pop_back();
    for (auto& p : n->parents) {
      if (p && p.use_count() == 1) stack.push_back(std::move(p));
    }
    n->parents.clear();
  }
}

void Node::accumulate(size_t i, const Matrix& g) {
  Node& p = *parents[i];
  if (!p.requires_grad) return;
  if (p.grad.size() == 0) {
    p.grad = Matrix::Zero(p.value.rows(), p.value.cols());
  }
  p.grad += g;
}

namespace {

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

[[noreturn]] void shape_fail(const char* op, const Matrix& a, const Matrix& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) +
                   " and " + shape_str(b));
}

[[noreturn]] void shape_fail(const char* op, const Matrix& a) {
  throw ShapeError(std::string(op) + ": invalid shape " + shape_str(a));
}

}  // namespace
}  // namespace detail

using detail::Node;

Tensor Tensor::from_node(std::shared_ptr<Node> n) {
  Tensor t;
  t.node_ = std::move(n);
  return t;
}

Tensor Tensor::constant(Matrix v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  return from_node(std::move(n));
}

Tensor Tensor::scalar(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return constant(std::move(m));
}

Tensor Tensor::parameter(Matrix v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  n->requires_grad = true;
  n->is_param = true;
  n->grad = Matrix::Zero(n->value.rows(), n->value.cols());
  n->op = "param";
  return from_node(std::move(n));
}

double Tensor::scalar_value() const {
  if (rows() != 1 || cols() != 1) {
    throw ShapeError("scalar_value: tensor is not 1x1");
  }
  return node_->value(0, 0);
}

Matrix Tensor::grad() const {
  if (node_->grad.size() == 0) {
    return Matrix::Zero(rows(), cols());
  }
  return node_->grad;
}

void Tensor::zero_grad() {
  node_->grad = Matrix::Zero(rows(), cols());
}

void Tensor::set_value(const Matrix& v) {
  if (v.rows() != rows() || v.cols() != cols()) {
    throw ShapeError("set_value: shape mismatch");
  }
  node_->value = v;
}

namespace {

bool& grad_enabled() {
  thread_local bool enabled = true;
  return enabled;
}

using BackFn = std::function<void(Node&)>;

Tensor make_op(Matrix value, std::vector<Tensor> inputs, const char* op,
               BackFn fn) {
  bool needs = false;
  if (grad_enabled()) {
    for (const auto& t : inputs) needs = needs || t.requires_grad();
  }
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = op;
  if (needs) {
    n->requires_grad = true;
    n->parents.reserve(inputs.size());
    for (auto& t : inputs) n->parents.push_back(t.node());
    n->backward = std::move(fn);
  }
  // Constant results keep no parents: inference-only graphs stay flat.
  return Tensor::from_node(std::move(n));
}

const Matrix& in(const Node& n, size_t i) { return n.parents[i]->value; }

// Broadcast combine: shapes may match, be 1x1, share rows (m x 1 operand),
// share cols (1 x n operand), or form an outer combination (m x 1 with 1 x n).
enum class BCast { same, a_only, b_only };

Matrix bcast_expand(const Matrix& m, Eigen::Index r, Eigen::Index c) {
  if (m.rows() == r && m.cols() == c) return m;
  if (m.rows() == 1 && m.cols() == 1) return Matrix::Constant(r, c, m(0, 0));
  if (m.cols() == 1 && m.rows() == r) return m.replicate(1, c);
  if (m.rows() == 1 && m.cols() == c) return m.replicate(r, 1);
  detail::shape_fail("broadcast", m);
}

bool bcast_ok(const Matrix& m, Eigen::Index r, Eigen::Index c) {
  return (m.rows() == r && m.cols() == c) ||
         (m.rows() == 1 && m.cols() == 1) ||
         (m.cols() == 1 && m.rows() == r) || (m.rows() == 1 && m.cols() == c);
}

// Reduces a full-size gradient back to the broadcast operand's shape.
Matrix bcast_reduce(const Matrix& g, Eigen::Index r, Eigen::Index c) {
  if (g.rows() == r && g.cols() == c) return g;
  if (r == 1 && c == 1) {
    Matrix out(1, 1);
    out(0, 0) = g.sum();
    return out;
  }
  if (c == 1 && g.rows() == r) return g.rowwise().sum();
  if (r == 1 && g.cols() == c) return g.colwise().sum();
  detail::shape_fail("broadcast-reduce", g);
}

std::pair<Eigen::Index, Eigen::Index> bcast_shape(const char* op,
                                                  const Matrix& a,
                                                  const Matrix& b) {
  const Eigen::Index r = std::max(a.rows(), b.rows());
  const Eigen::Index c = std::max(a.cols(), b.cols());
  if (!bcast_ok(a, r, c) || !bcast_ok(b, r, c)) detail::shape_fail(op, a, b);
  return {r, c};
}

template <typename F>
Tensor binary_bcast(const char* op, const Tensor& a, const Tensor& b, F f,
                    BackFn fn) {
  auto [r, c] = bcast_shape(op, a.value(), b.value());
  Matrix va = bcast_expand(a.value(), r, c);
  Matrix vb = bcast_expand(b.value(), r, c);
  Matrix out = f(va, vb);
  return make_op(std::move(out), {a, b}, op, std::move(fn));
}

template <typename F, typename D>
Tensor unary(const char* op, const Tensor& a, F f, D dfn) {
  Matrix out = f(a.value());
  return make_op(std::move(out), {a}, op,
                 [dfn](Node& n) { n.accumulate(0, dfn(n)); });
}

}  // namespace

// ---- arithmetic -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_bcast(
      "add", a, b, [](const Matrix& x, const Matrix& y) { return x + y; },
      [](Node& n) {
        n.accumulate(0, bcast_reduce(n.grad, in(n, 0).rows(), in(n, 0).cols()));
        n.accumulate(1, bcast_reduce(n.grad, in(n, 1).rows(), in(n, 1).cols()));
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_bcast(
      "sub", a, b, [](const Matrix& x, const Matrix& y) { return x - y; },
      [](Node& n) {
        n.accumulate(0, bcast_reduce(n.grad, in(n, 0).rows(), in(n, 0).cols()));
        n.accumulate(1,
                     -bcast_reduce(n.grad, in(n, 1).rows(), in(n, 1).cols()));
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_bcast(
      "mul", a, b,
      [](const Matrix& x, const Matrix& y) { return x.cwiseProduct(y); },
      [](Node& n) {
        const Matrix& va = in(n, 0);
        const Matrix& vb = in(n, 1);
        Matrix ea = bcast_expand(va, n.grad.rows(), n.grad.cols());
        Matrix eb = bcast_expand(vb, n.grad.rows(), n.grad.cols());
        n.accumulate(0, bcast_reduce(Matrix(n.grad.cwiseProduct(eb)), va.rows(),
                                     va.cols()));
        n.accumulate(1, bcast_reduce(Matrix(n.grad.cwiseProduct(ea)), vb.rows(),
                                     vb.cols()));
      });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) detail::shape_fail("matmul", a.value(), b.value());
  Matrix out = a.value() * b.value();
  return make_op(std::move(out), {a, b}, "matmul", [](Node& n) {
    n.accumulate(0, n.grad * in(n, 1).transpose());
    n.accumulate(1, in(n, 0).transpose() * n.grad);
  });
}

Tensor transpose(const Tensor& a) {
  Matrix out = a.value().transpose();
  return make_op(std::move(out), {a}, "transpose",
                 [](Node& n) { n.accumulate(0, n.grad.transpose()); });
}

Tensor scale(const Tensor& a, double c) {
  Matrix out = a.value() * c;
  return make_op(std::move(out), {a}, "scale",
                 [c](Node& n) { n.accumulate(0, n.grad * c); });
}

// ---- reductions -----------------------------------------------------------

Tensor sum(const Tensor& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return make_op(std::move(out), {a}, "sum", [](Node& n) {
    n.accumulate(0, Matrix::Constant(in(n, 0).rows(), in(n, 0).cols(),
                                     n.grad(0, 0)));
  });
}

Tensor sum_rows(const Tensor& a) {
  Matrix out = a.value().rowwise().sum();
  return make_op(std::move(out), {a}, "sum_rows", [](Node& n) {
    n.accumulate(0, n.grad.replicate(1, in(n, 0).cols()));
  });
}

Tensor sum_cols(const Tensor& a) {
  Matrix out = a.value().colwise().sum();
  return make_op(std::move(out), {a}, "sum_cols", [](Node& n) {
    n.accumulate(0, n.grad.replicate(in(n, 0).rows(), 1));
  });
}

Tensor mean(const Tensor& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().mean();
  return make_op(std::move(out), {a}, "mean", [](Node& n) {
    const double scale = 1.0 / static_cast<double>(in(n, 0).size());
    n.accumulate(0, Matrix::Constant(in(n, 0).rows(), in(n, 0).cols(),
                                     n.grad(0, 0) * scale));
  });
}

Tensor mean_cols(const Tensor& a) {
  Matrix out = a.value().colwise().mean();
  return make_op(std::move(out), {a}, "mean_cols", [](Node& n) {
    const double scale = 1.0 / static_cast<double>(in(n, 0).rows());
    n.accumulate(0, (n.grad * scale).replicate(in(n, 0).rows(), 1));
  });
}

// ---- elementwise nonlinearities -------------------------------------------

Tensor exp(const Tensor& a) {
  return unary(
      "exp", a, [](const Matrix& x) { return x.array().exp().matrix(); },
      [](Node& n) -> Matrix { return n.grad.cwiseProduct(n.value); });
}

Tensor log(const Tensor& a) {
  return unary(
      "log", a, [](const Matrix& x) { return x.array().log().matrix(); },
      [](Node& n) -> Matrix { return n.grad.cwiseQuotient(in(n, 0)); });
}

Tensor log_abs(const Tensor& a) {
  return unary(
      "log_abs", a,
      [](const Matrix& x) { return x.array().abs().log().matrix(); },
      [](Node& n) -> Matrix { return n.grad.cwiseQuotient(in(n, 0)); });
}

Tensor softplus(const Tensor& a) {
  // max(x, 0) + log1p(exp(-|x|)) avoids overflow on both tails.
  return unary(
      "softplus", a,
      [](const Matrix& x) {
        return (x.array().max(0.0) +
                (-x.array().abs()).exp().log1p()).matrix();
      },
      [](Node& n) -> Matrix {
        const auto& x = in(n, 0).array();
        Matrix sig = (1.0 / (1.0 + (-x).exp())).matrix();
        return n.grad.cwiseProduct(sig);
      });
}

Tensor sinh(const Tensor& a) {
  return unary(
      "sinh", a, [](const Matrix& x) { return x.array().sinh().matrix(); },
      [](Node& n) -> Matrix {
        return n.grad.cwiseProduct(Matrix(in(n, 0).array().cosh().matrix()));
      });
}

Tensor asinh(const Tensor& a) {
  return unary(
      "asinh", a,
      [](const Matrix& x) {
        return x.unaryExpr([](double v) { return std::asinh(v); });
      },
      [](Node& n) -> Matrix {
        Matrix d = (1.0 / (in(n, 0).array().square() + 1.0).sqrt()).matrix();
        return n.grad.cwiseProduct(d);
      });
}

Tensor relu(const Tensor& a) {
  return unary(
      "relu", a, [](const Matrix& x) { return x.array().max(0.0).matrix(); },
      [](Node& n) -> Matrix {
        Matrix mask = (in(n, 0).array() > 0.0).cast<double>().matrix();
        return n.grad.cwiseProduct(mask);
      });
}

Tensor square(const Tensor& a) {
  return unary(
      "square", a,
      [](const Matrix& x) { return x.array().square().matrix(); },
      [](Node& n) -> Matrix { return 2.0 * n.grad.cwiseProduct(in(n, 0)); });
}

Tensor sqrt(const Tensor& a) {
  return unary(
      "sqrt", a, [](const Matrix& x) { return x.array().sqrt().matrix(); },
      [](Node& n) -> Matrix {
        return 0.5 * n.grad.cwiseQuotient(n.value);
      });
}

// ---- factorizations -------------------------------------------------------

Tensor cholesky(const Tensor& a) {
  if (a.rows() != a.cols()) detail::shape_fail("cholesky", a.value());
  Matrix sym = 0.5 * (a.value() + a.value().transpose());
  Eigen::LLT<Matrix> llt(sym);
  if (llt.info() != Eigen::Success) {
    throw CholeskyError("cholesky: matrix not positive definite (size " +
                        std::to_string(a.rows()) + ")");
  }
  Matrix l = llt.matrixL();
  // Reverse mode for A = L L^T: with P = Phi(L^T Lbar) where Phi keeps the
  // lower triangle and halves the diagonal, Abar = L^-T P L^-1, symmetrized
  // because the forward pass reads only the symmetric part of A.
  return make_op(std::move(l), {a}, "cholesky", [](Node& n) {
    const Matrix& l = n.value;
    Matrix p = (l.transpose() * n.grad).eval();
    p = p.triangularView<Eigen::Lower>();
    p.diagonal() *= 0.5;
    Matrix w = l.transpose().triangularView<Eigen::Upper>().solve(p);
    Matrix abar =
        l.transpose().triangularView<Eigen::Upper>().solve(w.transpose());
    abar = (0.5 * (abar + abar.transpose())).eval();
    n.accumulate(0, abar);
  });
}

Tensor cholesky_spd(const Tensor& a) {
  try {
    return cholesky(a);
  } catch (const CholeskyError&) {
    const double base = a.value().diagonal().mean();
    double jitter = 1e-6 * base;
    const double max_jitter = 1e-2 * base;
    const Matrix eye = Matrix::Identity(a.rows(), a.cols());
    while (jitter <= max_jitter * (1.0 + 1e-12)) {
      numerics_log().cholesky_jitter_retries++;
      try {
        return cholesky(add(a, Tensor::constant(jitter * eye)));
      } catch (const CholeskyError&) {
        jitter *= 10.0;
      }
    }
    throw CholeskyError("cholesky_spd: jitter escalation exhausted (size " +
                        std::to_string(a.rows()) + ")");
  }
}

namespace {

// Plain fixed-order substitution. Unlike blocked library kernels this keeps
// the cancellation L^-1 L = I exact to the last bit, which the KL terms rely
// on to vanish identically when q matches the prior.
Matrix solve_lower(const Matrix& l, const Matrix& b) {
  Matrix x(b.rows(), b.cols());
  for (Eigen::Index j = 0; j < b.cols(); ++j) {
    for (Eigen::Index i = 0; i < b.rows(); ++i) {
      double acc = b(i, j);
      for (Eigen::Index k = 0; k < i; ++k) acc -= l(i, k) * x(k, j);
      x(i, j) = acc / l(i, i);
    }
  }
  return x;
}

Matrix solve_lower_transposed(const Matrix& l, const Matrix& b) {
  Matrix x(b.rows(), b.cols());
  const Eigen::Index n = b.rows();
  for (Eigen::Index j = 0; j < b.cols(); ++j) {
    for (Eigen::Index i = n - 1; i >= 0; --i) {
      double acc = b(i, j);
      for (Eigen::Index k = i + 1; k < n; ++k) acc -= l(k, i) * x(k, j);
      x(i, j) = acc / l(i, i);
    }
  }
  return x;
}

}  // namespace

Tensor tri_solve(const Tensor& l, const Tensor& b, bool transpose_l) {
  if (l.rows() != l.cols() || l.rows() != b.rows()) {
    detail::shape_fail("tri_solve", l.value(), b.value());
  }
  Matrix x = transpose_l ? solve_lower_transposed(l.value(), b.value())
                         : solve_lower(l.value(), b.value());
  return make_op(std::move(x), {l, b}, "tri_solve", [transpose_l](Node& n) {
    const Matrix& lv = in(n, 0);
    Matrix bbar;
    Matrix lbar;
    if (transpose_l) {
      // x = L^-T b:  bbar = L^-1 g,  lbar = -x bbar^T
      bbar = solve_lower(lv, n.grad);
      lbar = -(n.value * bbar.transpose());
    } else {
      // x = L^-1 b:  bbar = L^-T g,  lbar = -bbar x^T
      bbar = solve_lower_transposed(lv, n.grad);
      lbar = -(bbar * n.value.transpose());
    }
    lbar = lbar.triangularView<Eigen::Lower>();
    n.accumulate(0, lbar);
    n.accumulate(1, bbar);
  });
}

// ---- structure ------------------------------------------------------------

Tensor slice(const Tensor& a, Eigen::Index r0, Eigen::Index c0,
             Eigen::Index nr, Eigen::Index nc) {
  if (r0 < 0 || c0 < 0 || nr < 0 || nc < 0 || r0 + nr > a.rows() ||
      c0 + nc > a.cols()) {
    detail::shape_fail("slice", a.value());
  }
  Matrix out = a.value().block(r0, c0, nr, nc);
  return make_op(std::move(out), {a}, "slice", [r0, c0, nr, nc](Node& n) {
    Matrix g = Matrix::Zero(in(n, 0).rows(), in(n, 0).cols());
    g.block(r0, c0, nr, nc) = n.grad;
    n.accumulate(0, g);
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts[0].cols();
  for (const auto& p : parts) {
    if (p.cols() != cols) detail::shape_fail("concat_rows", p.value());
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return make_op(std::move(out), parts, "concat_rows", [](Node& n) {
    Eigen::Index r = 0;
    for (size_t i = 0; i < n.parents.size(); ++i) {
      const Eigen::Index nr = in(n, i).rows();
      n.accumulate(i, n.grad.middleRows(r, nr));
      r += nr;
    }
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Eigen::Index cols = 0;
  const Eigen::Index rows = parts[0].rows();
  for (const auto& p : parts) {
    if (p.rows() != rows) detail::shape_fail("concat_cols", p.value());
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return make_op(std::move(out), parts, "concat_cols", [](Node& n) {
    Eigen::Index c = 0;
    for (size_t i = 0; i < n.parents.size(); ++i) {
      const Eigen::Index nc = in(n, i).cols();
      n.accumulate(i, n.grad.middleCols(c, nc));
      c += nc;
    }
  });
}

Tensor broadcast_to(const Tensor& a, Eigen::Index r, Eigen::Index c) {
  if (!bcast_ok(a.value(), r, c)) detail::shape_fail("broadcast", a.value());
  Matrix out = bcast_expand(a.value(), r, c);
  return make_op(std::move(out), {a}, "broadcast", [](Node& n) {
    n.accumulate(0, bcast_reduce(n.grad, in(n, 0).rows(), in(n, 0).cols()));
  });
}

Tensor tril(const Tensor& a) {
  if (a.rows() != a.cols()) detail::shape_fail("tril", a.value());
  Matrix out = a.value().triangularView<Eigen::Lower>();
  return make_op(std::move(out), {a}, "tril", [](Node& n) {
    Matrix g = n.grad.triangularView<Eigen::Lower>();
    n.accumulate(0, g);
  });
}

Tensor diag_of(const Tensor& a) {
  if (a.rows() != a.cols()) detail::shape_fail("diag_of", a.value());
  Matrix out = a.value().diagonal();
  return make_op(std::move(out), {a}, "diag_of", [](Node& n) {
    Matrix g = Matrix::Zero(in(n, 0).rows(), in(n, 0).cols());
    g.diagonal() = n.grad.col(0);
    n.accumulate(0, g);
  });
}

Tensor diag_from(const Tensor& a) {
  if (a.cols() != 1) detail::shape_fail("diag_from", a.value());
  Matrix out = Matrix::Zero(a.rows(), a.rows());
  out.diagonal() = a.value().col(0);
  return make_op(std::move(out), {a}, "diag_from", [](Node& n) {
    Matrix g = n.grad.diagonal();
    n.accumulate(0, g);
  });
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b,
              bool relu_after) {
  if (x.cols() != w.cols() || b.cols() != 1 || b.rows() != w.rows()) {
    detail::shape_fail("affine", x.value(), w.value());
  }
  Matrix out = x.value() * w.value().transpose();
  out.rowwise() += b.value().col(0).transpose();
  if (relu_after) out = out.array().max(0.0).matrix();
  return make_op(std::move(out), {x, w, b}, "affine", [relu_after](Node& n) {
    Matrix g = n.grad;
    if (relu_after) {
      // post-activation output is enough: out > 0 iff pre-activation > 0
      g = g.cwiseProduct(Matrix((n.value.array() > 0.0).cast<double>()));
    }
    n.accumulate(0, g * in(n, 1));
    n.accumulate(1, g.transpose() * in(n, 0));
    n.accumulate(2, g.colwise().sum().transpose());
  });
}

NoGradGuard::NoGradGuard() : previous_(grad_enabled()) {
  grad_enabled() = false;
}

NoGradGuard::~NoGradGuard() { grad_enabled() = previous_; }

// ---- backward -------------------------------------------------------------

void backward(const Tensor& root) {
  if (!root.defined() || root.rows() != 1 || root.cols() != 1) {
    throw ShapeError("backward: root must be a defined 1x1 scalar");
  }
  Node* root_node = root.node().get();
  if (!root_node->requires_grad && !root_node->is_param) {
    return;  // nothing reachable requires gradients
  }

  // Iterative post-order topological sort over requires_grad nodes.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  struct Frame {
    Node* node;
    size_t next = 0;
  };
  std::vector<Frame> stack;
  stack.push_back({root_node});
  visited.insert(root_node);
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.node->parents.size()) {
      Node* p = f.node->parents[f.next++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  // Clear grads on the reachable set so repeated passes are bit-identical.
  for (Node* n : order) {
    if (n->grad.size() != 0) n->grad.setZero();
  }
  root_node->grad = Matrix::Constant(1, 1, 1.0);

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->grad.size() == 0) continue;  // no gradient flowed here
    if (n->backward) n->backward(*n);
    if (!n->is_param && n != root_node) {
      n->grad.resize(0, 0);  // free the frontier as it is consumed
    }
  }
}

}  // namespace etg
