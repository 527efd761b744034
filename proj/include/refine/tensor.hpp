#pragma once

// Dense 2-D tensors with reverse-mode differentiation.
//
// A Tensor is a shared handle to a node holding a row-major value and, when
// it requires a gradient, a same-shape gradient buffer. Operations are
// recorded on a Tape; Tape::backward replays the recorded closures in reverse
// order. Parameters are Tensors created outside any tape and outlive it.

#include <Eigen/Core>

#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "refine/errors.hpp"

namespace refine {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixXf = MatrixX<float>;
using MatrixXd = MatrixX<double>;

template <typename Scalar>
struct TensorNode {
  MatrixX<Scalar> value;
  MatrixX<Scalar> grad;
  bool requires_grad = false;
  /// Set when backward delivered a gradient here since the last zero_grad.
  bool reached = false;
};

template <typename Scalar>
class Tensor {
 public:
  using Matrix = MatrixX<Scalar>;

  Tensor() = default;

  static Tensor constant(Matrix value) { return Tensor(std::move(value), false); }
  static Tensor parameter(Matrix value) { return Tensor(std::move(value), true); }

  bool defined() const { return node_ != nullptr; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  Eigen::Index size() const { return node_->value.size(); }

  const Matrix& value() const { return node_->value; }
  /// Direct write access, for optimizers and checkpoint loading.
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  Matrix& mutable_grad() { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  bool reached() const { return node_->reached; }

  Scalar item() const {
    if (size() != 1) throw DomainError("item() on a non-scalar tensor");
    return node_->value(0, 0);
  }

  void zero_grad() {
    if (node_->requires_grad) node_->grad.setZero();
    node_->reached = false;
  }

  /// Accumulates `g` into this tensor's gradient; no-op for constants.
  template <typename Derived>
  void accumulate_grad(const Eigen::MatrixBase<Derived>& g) const {
    if (!node_->requires_grad) return;
    node_->grad += g;
    node_->reached = true;
  }

  TensorNode<Scalar>* node() const { return node_.get(); }

 private:
  template <typename>
  friend class Tape;

  Tensor(Matrix value, bool requires_grad) : node_(std::make_shared<TensorNode<Scalar>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
    if (requires_grad) node_->grad = Matrix::Zero(node_->value.rows(), node_->value.cols());
  }

  std::shared_ptr<TensorNode<Scalar>> node_;
};

using Tensorf = Tensor<float>;

template <typename Scalar>
class Tape {
 public:
  using Matrix = MatrixX<Scalar>;
  using T = Tensor<Scalar>;
  using Backward = std::function<void(const Matrix& out_grad)>;

  /// A non-recording tape evaluates values only; nothing it returns requires grad.
  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  std::size_t size() const { return ops_.size(); }

  /// Records a custom op. `backward` receives d(loss)/d(output) and must
  /// accumulate into the inputs it captured.
  T record(Matrix value, std::initializer_list<T> inputs, Backward backward) {
    bool needs = false;
    if (recording_) {
      for (const auto& in : inputs) needs = needs || in.requires_grad();
    }
    T out(std::move(value), needs);
    if (needs) {
      auto* node = out.node();
      ops_.push_back({[node, fn = std::move(backward)] { fn(node->grad); }, out.node_});
    }
    return out;
  }

  T detach(const T& a) { return T::constant(a.value()); }

  T matmul(const T& a, const T& b) {
    if (a.cols() != b.rows()) throw DomainError(shape_msg("matmul", a, b));
    Matrix v(a.rows(), b.cols());
    v.noalias() = a.value() * b.value();
    return record(std::move(v), {a, b}, [a, b](const Matrix& g) {
      if (a.requires_grad()) a.accumulate_grad(g * b.value().transpose());
      if (b.requires_grad()) b.accumulate_grad(a.value().transpose() * g);
    });
  }

  /// x * W + b with b a 1 x out row broadcast over rows.
  T linear(const T& x, const T& w, const T& b) {
    if (x.cols() != w.rows() || b.rows() != 1 || b.cols() != w.cols()) throw DomainError(shape_msg("linear", x, w));
    Matrix v(x.rows(), w.cols());
    v.noalias() = x.value() * w.value();
    v.rowwise() += b.value().row(0);
    return record(std::move(v), {x, w, b}, [x, w, b](const Matrix& g) {
      if (x.requires_grad()) x.accumulate_grad(g * w.value().transpose());
      if (w.requires_grad()) w.accumulate_grad(x.value().transpose() * g);
      if (b.requires_grad()) b.accumulate_grad(g.colwise().sum());
    });
  }

  /// Elementwise sum; `b` may also be a 1 x cols row broadcast over rows.
  T add(const T& a, const T& b) {
    if (a.rows() == b.rows() && a.cols() == b.cols()) {
      return record(a.value() + b.value(), {a, b}, [a, b](const Matrix& g) {
        a.accumulate_grad(g);
        b.accumulate_grad(g);
      });
    }
    if (b.rows() == 1 && b.cols() == a.cols()) {
      Matrix v = a.value();
      v.rowwise() += b.value().row(0);
      return record(std::move(v), {a, b}, [a, b](const Matrix& g) {
        a.accumulate_grad(g);
        if (b.requires_grad()) b.accumulate_grad(g.colwise().sum());
      });
    }
    throw DomainError(shape_msg("add", a, b));
  }

  T sub(const T& a, const T& b) {
    require_same("sub", a, b);
    return record(a.value() - b.value(), {a, b}, [a, b](const Matrix& g) {
      a.accumulate_grad(g);
      b.accumulate_grad(-g);
    });
  }

  T mul(const T& a, const T& b) {
    require_same("mul", a, b);
    return record(a.value().cwiseProduct(b.value()), {a, b}, [a, b](const Matrix& g) {
      if (a.requires_grad()) a.accumulate_grad(g.cwiseProduct(b.value()));
      if (b.requires_grad()) b.accumulate_grad(g.cwiseProduct(a.value()));
    });
  }

  T scale(const T& a, Scalar s) {
    return record(a.value() * s, {a}, [a, s](const Matrix& g) { a.accumulate_grad(g * s); });
  }

  /// sin(frequency * a)
  T sin(const T& a, Scalar frequency = Scalar(1)) {
    Matrix v = (a.value().array() * frequency).sin().matrix();
    return record(std::move(v), {a}, [a, frequency](const Matrix& g) {
      a.accumulate_grad((g.array() * (a.value().array() * frequency).cos() * frequency).matrix());
    });
  }

  T relu(const T& a) {
    return record(a.value().cwiseMax(Scalar(0)), {a}, [a](const Matrix& g) {
      a.accumulate_grad((a.value().array() > Scalar(0)).select(g.array(), Scalar(0)).matrix());
    });
  }

  T sigmoid(const T& a) {
    Matrix v = a.value().unaryExpr([](Scalar x) { return stable_sigmoid(x); });
    T out = record(v, {a}, nullptr);
    if (out.requires_grad()) {
      ops_.back().run = [a, node = out.node()] {
        const auto& s = node->value;
        a.accumulate_grad((node->grad.array() * s.array() * (Scalar(1) - s.array())).matrix());
      };
    }
    return out;
  }

  /// log(1 + exp(a)), computed without overflow.
  T softplus(const T& a) {
    Matrix v = a.value().unaryExpr([](Scalar x) { return std::max(x, Scalar(0)) + std::log1p(std::exp(-std::abs(x))); });
    return record(std::move(v), {a}, [a](const Matrix& g) {
      a.accumulate_grad(g.cwiseProduct(a.value().unaryExpr([](Scalar x) { return stable_sigmoid(x); })));
    });
  }

  /// Column-wise concatenation of parts with equal row counts.
  T concat(std::span<const T> parts) {
    if (parts.empty()) throw DomainError("concat of zero tensors");
    Eigen::Index cols = 0;
    for (const auto& p : parts) {
      if (p.rows() != parts[0].rows()) throw DomainError(shape_msg("concat", parts[0], p));
      cols += p.cols();
    }
    Matrix v(parts[0].rows(), cols);
    Eigen::Index c = 0;
    for (const auto& p : parts) {
      v.middleCols(c, p.cols()) = p.value();
      c += p.cols();
    }
    std::vector<T> saved(parts.begin(), parts.end());
    bool needs = false;
    for (const auto& p : parts) needs = needs || p.requires_grad();
    T out(std::move(v), recording_ && needs);
    if (out.requires_grad()) {
      auto* node = out.node();
      ops_.push_back({[node, saved = std::move(saved)] {
                        Eigen::Index off = 0;
                        for (const auto& p : saved) {
                          if (p.requires_grad()) p.accumulate_grad(node->grad.middleCols(off, p.cols()));
                          off += p.cols();
                        }
                      },
                      out.node_});
    }
    return out;
  }

  /// Row-wise concatenation of parts with equal column counts.
  T concat_rows(std::span<const T> parts) {
    if (parts.empty()) throw DomainError("concat_rows of zero tensors");
    Eigen::Index rows = 0;
    for (const auto& p : parts) {
      if (p.cols() != parts[0].cols()) throw DomainError(shape_msg("concat_rows", parts[0], p));
      rows += p.rows();
    }
    Matrix v(rows, parts[0].cols());
    Eigen::Index r = 0;
    for (const auto& p : parts) {
      v.middleRows(r, p.rows()) = p.value();
      r += p.rows();
    }
    std::vector<T> saved(parts.begin(), parts.end());
    bool needs = false;
    for (const auto& p : parts) needs = needs || p.requires_grad();
    T out(std::move(v), recording_ && needs);
    if (out.requires_grad()) {
      auto* node = out.node();
      ops_.push_back({[node, saved = std::move(saved)] {
                        Eigen::Index off = 0;
                        for (const auto& p : saved) {
                          if (p.requires_grad()) p.accumulate_grad(node->grad.middleRows(off, p.rows()));
                          off += p.rows();
                        }
                      },
                      out.node_});
    }
    return out;
  }

  /// Sum of all elements, as a 1 x 1 tensor.
  T sum(const T& a) {
    Matrix v(1, 1);
    v(0, 0) = a.value().sum();
    return record(std::move(v), {a}, [a](const Matrix& g) {
      a.accumulate_grad(Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
    });
  }

  /// Mean squared difference against a fixed target.
  T mse(const T& pred, const Matrix& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols()) throw DomainError("mse: shape mismatch");
    if (pred.size() == 0) throw DomainError("mse: empty input");
    const Scalar n = static_cast<Scalar>(pred.size());
    Matrix v(1, 1);
    v(0, 0) = (pred.value() - target).squaredNorm() / n;
    return record(std::move(v), {pred}, [pred, target, n](const Matrix& g) {
      pred.accumulate_grad((pred.value() - target) * (Scalar(2) * g(0, 0) / n));
    });
  }

  /// Mean binary cross entropy of sigmoid(logits) against targets in [0, 1].
  T bce_with_logits(const T& logits, const Matrix& targets) {
    if (logits.rows() != targets.rows() || logits.cols() != targets.cols()) {
      throw DomainError("bce_with_logits: shape mismatch");
    }
    if (logits.size() == 0) throw DomainError("bce_with_logits: empty input");
    const Scalar n = static_cast<Scalar>(logits.size());
    const auto& x = logits.value();
    Scalar total = 0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const Scalar xi = x.data()[i];
      total += std::max(xi, Scalar(0)) - xi * targets.data()[i] + std::log1p(std::exp(-std::abs(xi)));
    }
    Matrix v(1, 1);
    v(0, 0) = total / n;
    return record(std::move(v), {logits}, [logits, targets, n](const Matrix& g) {
      Matrix d = logits.value().unaryExpr([](Scalar xi) { return stable_sigmoid(xi); }) - targets;
      logits.accumulate_grad(d * (g(0, 0) / n));
    });
  }

  T gather_rows(const T& a, std::vector<Eigen::Index> rows) {
    Matrix v(static_cast<Eigen::Index>(rows.size()), a.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i] < 0 || rows[i] >= a.rows()) throw DomainError("gather_rows: index out of range");
      v.row(static_cast<Eigen::Index>(i)) = a.value().row(rows[i]);
    }
    return record(std::move(v), {a}, [a, rows = std::move(rows)](const Matrix& g) {
      if (!a.requires_grad()) return;
      auto* node = a.node();
      for (std::size_t i = 0; i < rows.size(); ++i) node->grad.row(rows[i]) += g.row(static_cast<Eigen::Index>(i));
      node->reached = true;
    });
  }

  /// Row-major reinterpretation to a new shape with the same element count.
  T reshape(const T& a, Eigen::Index rows, Eigen::Index cols) {
    if (rows * cols != a.size()) throw DomainError("reshape: element count mismatch");
    Matrix v = Eigen::Map<const Matrix>(a.value().data(), rows, cols);
    const Eigen::Index r0 = a.rows();
    const Eigen::Index c0 = a.cols();
    return record(std::move(v), {a}, [a, r0, c0](const Matrix& g) {
      a.accumulate_grad(Eigen::Map<const Matrix>(g.data(), r0, c0));
    });
  }

  /// Runs the recorded closures in reverse. A tape can be replayed only once.
  void backward(const T& loss) {
    if (!loss.defined() || loss.size() != 1) throw DomainError("backward requires a scalar loss");
    if (consumed_) throw DomainError("backward called twice on the same tape");
    consumed_ = true;
    if (!loss.requires_grad()) return;
    loss.node()->grad(0, 0) += Scalar(1);
    loss.node()->reached = true;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) it->run();
    ops_.clear();
  }

  static Scalar stable_sigmoid(Scalar x) {
    if (x >= 0) return Scalar(1) / (Scalar(1) + std::exp(-x));
    const Scalar e = std::exp(x);
    return e / (Scalar(1) + e);
  }

 private:
  struct Op {
    std::function<void()> run;
    std::shared_ptr<TensorNode<Scalar>> output;
  };

  static std::string shape_msg(const char* op, const T& a, const T& b) {
    return std::string(op) + ": incompatible shapes " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
           " and " + std::to_string(b.rows()) + "x" + std::to_string(b.cols());
  }

  static void require_same(const char* op, const T& a, const T& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw DomainError(shape_msg(op, a, b));
  }

  bool recording_;
  bool consumed_ = false;
  std::vector<Op> ops_;
};

using Tapef = Tape<float>;

}  // namespace refine
