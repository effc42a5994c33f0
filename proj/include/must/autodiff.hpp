#pragma once

// Reverse-mode differentiation over dense row-major matrices.
//
// A Tape records every operation of one forward pass. Parameters live in a
// ParamStore that outlives tapes; Tape::backward() adds dL/dparam into the
// store's gradient buffers. Every op checks its output for NaN/Inf and throws
// NumericError naming the op.

#include "must/common.hpp"

#include <cmath>
#include <cstdint>
#include <algorithm>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace must {

/// Rank-2 tensor (vectors are 1xN or Nx1) with row-major storage.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Eigen::Index rows, Eigen::Index cols) : m_(Matrix::Zero(rows, cols)) {}
  explicit Tensor(Matrix m) : m_(std::move(m)) { check_finite("tensor"); }

  std::vector<std::size_t> shape() const {
    return {static_cast<std::size_t>(m_.rows()), static_cast<std::size_t>(m_.cols())};
  }
  std::size_t size() const { return static_cast<std::size_t>(m_.size()); }
  const double* data() const { return m_.data(); }
  double* data() { return m_.data(); }
  const Matrix& matrix() const { return m_; }
  Matrix& matrix() { return m_; }

  void check_finite(const char* what) const {
    if (!m_.allFinite()) throw NumericError(std::string("non-finite value in ") + what);
  }

 private:
  Matrix m_;
};

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  Matrix adam_m;  // optimizer slots
  Matrix adam_v;
  bool grad_pending = false;  // set by backward, cleared by zero_grad
};

/// Named learnable parameters with paired gradient and optimizer buffers.
class ParamStore {
 public:
  Parameter& add(const std::string& name, Matrix init) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name '" + name + "'");
    if (!init.allFinite()) throw NumericError("non-finite initial value for '" + name + "'");
    auto p = std::make_unique<Parameter>();
    p->name = name;
    p->grad = Matrix::Zero(init.rows(), init.cols());
    p->adam_m = Matrix::Zero(init.rows(), init.cols());
    p->adam_v = Matrix::Zero(init.rows(), init.cols());
    p->value = std::move(init);
    index_[name] = params_.size();
    params_.push_back(std::move(p));
    return *params_.back();
  }

  Parameter& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter named '" + name + "'");
    return *params_[it->second];
  }
  const Parameter& get(const std::string& name) const { return const_cast<ParamStore*>(this)->get(name); }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  void zero_grad() {
    for (auto& p : params_) {
      p->grad.setZero();
      p->grad_pending = false;
    }
  }

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.cbegin(); }
  auto end() const { return params_.cend(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
    return n;
  }

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

class Tape;

/// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value, const char* op = "constant") { return push(std::move(value), op, false, nullptr); }

  Var param(Parameter& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return {this, it->second};
    Var v = push(p.value, "param", true, nullptr);
    nodes_[v.id].param = &p;
    param_nodes_[&p] = v.id;
    return v;
  }

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Records an op result. `back` receives the upstream gradient.
  Var push(Matrix value, const char* op, bool requires_grad, Backward back) {
    if (!value.allFinite()) throw NumericError(std::string("non-finite value produced by ") + op);
    Node n;
    n.value = std::move(value);
    n.op = op;
    n.requires_grad = requires_grad;
    if (requires_grad) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  /// Adds `g` to the gradient of node `id`; no-op for constants.
  template <typename Expr>
  void accumulate(std::size_t id, const Expr& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) n.grad = g;
    else n.grad += g;
  }

  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }

  /// Propagates d(loss)/d(node) back to every parameter leaf and adds it to Parameter::grad.
  void backward(Var loss) {
    if (loss.tape != this) throw std::invalid_argument("backward: loss belongs to another tape");
    if (backward_done_) throw std::logic_error("backward called twice on the same tape");
    const Matrix& lv = value(loss.id);
    if (lv.rows() != 1 || lv.cols() != 1)
      throw ShapeError("backward: loss must be scalar, got " + shape_str(lv.rows(), lv.cols()));
    for (const auto& [p, id] : param_nodes_)
      if (p->grad_pending) throw std::logic_error("backward: gradients of '" + p->name + "' not reset since last backward");
    backward_done_ = true;
    accumulate(loss.id, Matrix::Ones(1, 1));
    for (std::size_t k = loss.id + 1; k-- > 0;) {
      Node& n = nodes_[k];
      if (!n.requires_grad || n.grad.size() == 0) continue;
      if (!n.grad.allFinite()) throw NumericError(std::string("non-finite gradient at ") + n.op);
      if (n.back) {
        // Copy: backward rules may accumulate into other nodes while reading this one.
        const Matrix g = n.grad;
        n.back(*this, g);
      }
    }
    for (auto& [p, id] : param_nodes_) {
      const Matrix& g = nodes_[id].grad;
      if (g.size() != 0) p->grad += g;
      p->grad_pending = true;
    }
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward back;
    Parameter* param = nullptr;
    const char* op = "";
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::map<Parameter*, std::size_t> param_nodes_;
  bool backward_done_ = false;
};

inline const Matrix& Var::value() const { return tape->value(id); }

// ---------------------------------------------------------------------------
// primitives
// ---------------------------------------------------------------------------

namespace ad {

namespace detail {

inline Tape& same_tape(const Var& a, const Var& b) {
  if (a.tape != b.tape || a.tape == nullptr) throw std::invalid_argument("operands on different tapes");
  return *a.tape;
}

inline void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.rows(), a.cols()) + " vs " +
                     shape_str(b.rows(), b.cols()));
}

inline bool any_grad(std::initializer_list<Var> vs) {
  for (const auto& v : vs)
    if (v.tape->requires_grad(v.id)) return true;
  return false;
}

}  // namespace detail

inline Var matmul(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  if (a.cols() != b.rows())
    throw ShapeError("matmul: " + shape_str(a.rows(), a.cols()) + " x " + shape_str(b.rows(), b.cols()));
  Matrix out = a.value() * b.value();
  return t.push(std::move(out), "matmul", detail::any_grad({a, b}), [a, b](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(a.id)) tp.accumulate(a.id, g * tp.value(b.id).transpose());
    if (tp.requires_grad(b.id)) tp.accumulate(b.id, tp.value(a.id).transpose() * g);
  });
}

/// a * b^T, used for weights stored as (out x in).
inline Var matmul_nt(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  if (a.cols() != b.cols())
    throw ShapeError("matmul_nt: " + shape_str(a.rows(), a.cols()) + " x " + shape_str(b.rows(), b.cols()) + "^T");
  Matrix out = a.value() * b.value().transpose();
  return t.push(std::move(out), "matmul_nt", detail::any_grad({a, b}), [a, b](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(a.id)) tp.accumulate(a.id, g * tp.value(b.id));
    if (tp.requires_grad(b.id)) tp.accumulate(b.id, g.transpose() * tp.value(a.id));
  });
}

inline Var transpose(Var a) {
  Matrix out = a.value().transpose();
  return a.tape->push(std::move(out), "transpose", detail::any_grad({a}),
                      [a](Tape& tp, const Matrix& g) { tp.accumulate(a.id, g.transpose()); });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  bool grad = false;
  for (const auto& p : parts) {
    if (p.tape != parts.front().tape) throw std::invalid_argument("concat_cols: operands on different tapes");
    if (p.rows() != rows) throw ShapeError("concat_cols: row count mismatch");
    cols += p.cols();
    grad = grad || p.tape->requires_grad(p.id);
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return parts.front().tape->push(std::move(out), "concat_cols", grad, [parts](Tape& tp, const Matrix& g) {
    Eigen::Index off = 0;
    for (const auto& p : parts) {
      const Eigen::Index c = tp.value(p.id).cols();
      if (tp.requires_grad(p.id)) tp.accumulate(p.id, g.middleCols(off, c));
      off += c;
    }
  });
}

inline Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw ShapeError("slice_rows: range out of bounds");
  Matrix out = a.value().middleRows(start, count);
  const Eigen::Index rows = a.rows(), cols = a.cols();
  return a.tape->push(std::move(out), "slice_rows", detail::any_grad({a}),
                      [a, start, count, rows, cols](Tape& tp, const Matrix& g) {
                        Matrix full = Matrix::Zero(rows, cols);
                        full.middleRows(start, count) = g;
                        tp.accumulate(a.id, full);
                      });
}

inline Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw ShapeError("slice_cols: range out of bounds");
  Matrix out = a.value().middleCols(start, count);
  const Eigen::Index rows = a.rows(), cols = a.cols();
  return a.tape->push(std::move(out), "slice_cols", detail::any_grad({a}),
                      [a, start, count, rows, cols](Tape& tp, const Matrix& g) {
                        Matrix full = Matrix::Zero(rows, cols);
                        full.middleCols(start, count) = g;
                        tp.accumulate(a.id, full);
                      });
}

inline Var add(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  detail::require_same_shape(a, b, "add");
  Matrix out = a.value() + b.value();
  return t.push(std::move(out), "add", detail::any_grad({a, b}), [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a.id, g);
    tp.accumulate(b.id, g);
  });
}

inline Var sub(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  detail::require_same_shape(a, b, "sub");
  Matrix out = a.value() - b.value();
  return t.push(std::move(out), "sub", detail::any_grad({a, b}), [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a.id, g);
    tp.accumulate(b.id, -g);
  });
}

/// Hadamard product.
inline Var mul(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  detail::require_same_shape(a, b, "mul");
  Matrix out = a.value().cwiseProduct(b.value());
  return t.push(std::move(out), "mul", detail::any_grad({a, b}), [a, b](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(a.id)) tp.accumulate(a.id, g.cwiseProduct(tp.value(b.id)));
    if (tp.requires_grad(b.id)) tp.accumulate(b.id, g.cwiseProduct(tp.value(a.id)));
  });
}

/// Hadamard product with a constant matrix (no node for the constant).
inline Var mul_const(Var a, const Matrix& c) {
  if (a.rows() != c.rows() || a.cols() != c.cols())
    throw ShapeError("mul_const: shape mismatch " + shape_str(a.rows(), a.cols()) + " vs " + shape_str(c.rows(), c.cols()));
  Matrix out = a.value().cwiseProduct(c);
  return a.tape->push(std::move(out), "mul_const", detail::any_grad({a}),
                      [a, c](Tape& tp, const Matrix& g) { tp.accumulate(a.id, g.cwiseProduct(c)); });
}

/// Constant matrix times a (no node for the constant).
inline Var const_matmul(const Matrix& c, Var a) {
  if (c.cols() != a.rows())
    throw ShapeError("const_matmul: " + shape_str(c.rows(), c.cols()) + " x " + shape_str(a.rows(), a.cols()));
  Matrix out = c * a.value();
  return a.tape->push(std::move(out), "const_matmul", detail::any_grad({a}),
                      [a, c](Tape& tp, const Matrix& g) { tp.accumulate(a.id, c.transpose() * g); });
}

inline Var scale(Var a, double s) {
  Matrix out = a.value() * s;
  return a.tape->push(std::move(out), "scale", detail::any_grad({a}),
                      [a, s](Tape& tp, const Matrix& g) { tp.accumulate(a.id, g * s); });
}

/// a (n x k) + bias (1 x k) broadcast over rows.
inline Var add_row(Var a, Var bias) {
  Tape& t = detail::same_tape(a, bias);
  if (bias.rows() != 1 || bias.cols() != a.cols())
    throw ShapeError("add_row: bias " + shape_str(bias.rows(), bias.cols()) + " for " + shape_str(a.rows(), a.cols()));
  Matrix out = a.value().rowwise() + bias.value().row(0);
  return t.push(std::move(out), "add_row", detail::any_grad({a, bias}), [a, bias](Tape& tp, const Matrix& g) {
    tp.accumulate(a.id, g);
    if (tp.requires_grad(bias.id)) tp.accumulate(bias.id, g.colwise().sum());
  });
}

/// out_ij = u_i + v_j for column vectors u, v (n x 1).
inline Var add_outer(Var u, Var v) {
  Tape& t = detail::same_tape(u, v);
  if (u.cols() != 1 || v.cols() != 1) throw ShapeError("add_outer: operands must be column vectors");
  Matrix out = u.value() * Matrix::Ones(1, v.rows()) + Matrix::Ones(u.rows(), 1) * v.value().transpose();
  return t.push(std::move(out), "add_outer", detail::any_grad({u, v}), [u, v](Tape& tp, const Matrix& g) {
    tp.accumulate(u.id, g.rowwise().sum());
    tp.accumulate(v.id, g.colwise().sum().transpose());
  });
}

inline Var leaky_relu(Var a, double slope = 0.2) {
  Matrix out = a.value().unaryExpr([slope](double x) { return x > 0.0 ? x : slope * x; });
  return a.tape->push(std::move(out), "leaky_relu", detail::any_grad({a}), [a, slope](Tape& tp, const Matrix& g) {
    tp.accumulate(a.id, g.cwiseProduct(tp.value(a.id).unaryExpr([slope](double x) { return x > 0.0 ? 1.0 : slope; })));
  });
}

/// ELU with alpha = 1.
inline Var elu(Var a) {
  Matrix out = a.value().unaryExpr([](double x) { return x > 0.0 ? x : std::expm1(x); });
  return a.tape->push(std::move(out), "elu", detail::any_grad({a}), [a](Tape& tp, const Matrix& g) {
    tp.accumulate(a.id, g.cwiseProduct(tp.value(a.id).unaryExpr([](double x) { return x > 0.0 ? 1.0 : std::exp(x); })));
  });
}

inline Var relu(Var a) {
  Matrix out = a.value().cwiseMax(0.0);
  return a.tape->push(std::move(out), "relu", detail::any_grad({a}), [a](Tape& tp, const Matrix& g) {
    tp.accumulate(a.id, g.cwiseProduct(tp.value(a.id).unaryExpr([](double x) { return x > 0.0 ? 1.0 : 0.0; })));
  });
}

inline double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Var sigmoid(Var a) {
  Matrix out = a.value().unaryExpr([](double x) { return sigmoid_scalar(x); });
  Tape& t = *a.tape;
  const std::size_t self = t.size();
  return t.push(std::move(out), "sigmoid", detail::any_grad({a}), [a, self](Tape& tp, const Matrix& g) {
    const Matrix& y = tp.value(self);
    tp.accumulate(a.id, g.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix())));
  });
}

inline Var tanh(Var a) {
  Matrix out = a.value().array().tanh().matrix();
  Tape& t = *a.tape;
  const std::size_t self = t.size();
  return t.push(std::move(out), "tanh", detail::any_grad({a}), [a, self](Tape& tp, const Matrix& g) {
    const Matrix& y = tp.value(self);
    tp.accumulate(a.id, g.cwiseProduct((1.0 - y.array().square()).matrix()));
  });
}

inline Var abs(Var a) {
  Matrix out = a.value().cwiseAbs();
  return a.tape->push(std::move(out), "abs", detail::any_grad({a}), [a](Tape& tp, const Matrix& g) {
    tp.accumulate(a.id, g.cwiseProduct(tp.value(a.id).unaryExpr([](double x) { return double((x > 0.0) - (x < 0.0)); })));
  });
}

inline Var sum(Var a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  const Eigen::Index r = a.rows(), c = a.cols();
  return a.tape->push(std::move(out), "sum", detail::any_grad({a}),
                      [a, r, c](Tape& tp, const Matrix& g) { tp.accumulate(a.id, Matrix::Constant(r, c, g(0, 0))); });
}

/// Row-wise softmax restricted to entries where mask != 0; masked entries are 0.
/// Uses per-row max subtraction. Every row must have at least one active entry.
inline Var masked_row_softmax(Var a, const Matrix& mask) {
  const Matrix& x = a.value();
  if (mask.rows() != x.rows() || mask.cols() != x.cols()) throw ShapeError("masked_row_softmax: mask shape mismatch");
  Matrix out = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      if (mask(i, j) != 0.0) mx = std::max(mx, x(i, j));
    if (!std::isfinite(mx)) throw ShapeError("masked_row_softmax: row " + std::to_string(i) + " has no active entry");
    double z = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      if (mask(i, j) != 0.0) z += (out(i, j) = std::exp(x(i, j) - mx));
    out.row(i) /= z;
  }
  Tape& t = *a.tape;
  const std::size_t self = t.size();
  return t.push(std::move(out), "masked_row_softmax", detail::any_grad({a}), [a, self](Tape& tp, const Matrix& g) {
    const Matrix& y = tp.value(self);
    const Vector dot = y.cwiseProduct(g).rowwise().sum();
    Matrix gx = y.cwiseProduct(g - dot * Matrix::Ones(1, g.cols()));
    tp.accumulate(a.id, gx);
  });
}

/// w^T X for constant weights w (n) and X (n x d); result is 1 x d.
inline Var weighted_row_sum(const Vector& w, Var x) {
  if (w.size() != x.rows()) throw ShapeError("weighted_row_sum: weight count does not match rows");
  return const_matmul(Matrix(w.transpose()), x);
}

/// Stacks a 1 x d row n times.
inline Var repeat_rows(Var row, Eigen::Index n) {
  if (row.rows() != 1) throw ShapeError("repeat_rows: operand must be a single row");
  return const_matmul(Matrix::Ones(n, 1), row);
}

}  // namespace ad

// ---------------------------------------------------------------------------
// gradient check
// ---------------------------------------------------------------------------

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  Eigen::Index worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates_checked = 0;
};

/// Compares analytic gradients with central differences on up to `max_coords_per_param`
/// sampled coordinates of every parameter. The relative error of one coordinate is
/// |a - n| / (max(|a|, |n|) + 1e-8).
inline GradCheckReport grad_check(const std::function<Var(Tape&)>& forward, ParamStore& params, double eps = 1e-4,
                                  std::size_t max_coords_per_param = 16, std::uint64_t seed = 7) {
  if (!(eps > 0.0)) throw std::invalid_argument("grad_check: eps must be > 0");
  auto evaluate = [&] {
    Tape t;
    return forward(t).scalar();
  };
  const double base1 = evaluate();
  const double base2 = evaluate();
  if (base1 != base2) throw std::logic_error("grad_check: forward function is not deterministic");

  params.zero_grad();
  {
    Tape t;
    Var loss = forward(t);
    t.backward(loss);
  }
  GradCheckReport rep;
  std::mt19937_64 rng(seed);
  for (auto& pp : params) {
    Parameter& p = *pp;
    const Eigen::Index total = p.value.size();
    std::vector<Eigen::Index> coords;
    if (static_cast<std::size_t>(total) <= max_coords_per_param) {
      for (Eigen::Index k = 0; k < total; ++k) coords.push_back(k);
    } else {
      std::uniform_int_distribution<Eigen::Index> pick(0, total - 1);
      for (std::size_t k = 0; k < max_coords_per_param; ++k) coords.push_back(pick(rng));
    }
    for (Eigen::Index k : coords) {
      double& x = p.value.data()[k];
      const double saved = x;
      x = saved + eps;
      const double up = evaluate();
      x = saved - eps;
      const double down = evaluate();
      x = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = p.grad.data()[k];
      const double rel = std::abs(analytic - numeric) / (std::max(std::abs(analytic), std::abs(numeric)) + 1e-8);
      ++rep.coordinates_checked;
      if (rel > rep.max_rel_error || rep.worst_index < 0) {
        rep.max_rel_error = std::max(rep.max_rel_error, rel);
        rep.worst_param = p.name;
        rep.worst_index = k;
        rep.worst_analytic = analytic;
        rep.worst_numeric = numeric;
      }
    }
  }
  params.zero_grad();
  return rep;
}

}  // namespace must
