#pragma once

// Matrix-valued reverse-mode automatic differentiation.
//
// A Tape records every operation as a node holding its value and a closure
// that pushes the node's output gradient back to its inputs. Nodes are
// created in topological order, so backward() is a single reverse sweep.
// Inputs that do not require gradients are skipped entirely.

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <utility>
#include <vector>

#include "pacgen/error.hpp"

namespace pacgen::ad {

using Matrix = Eigen::MatrixXd;

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const {
    detail::require(rows() == 1 && cols() == 1, "scalar() on a non-1x1 node");
    return value()(0, 0);
  }
  bool requires_grad() const;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value) { return push(std::move(value), false, nullptr); }
  Var variable(Matrix value) { return push(std::move(value), true, nullptr); }

  /// Records an operation. The node requires a gradient iff any input does;
  /// otherwise `backward` is dropped.
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
    bool needs = false;
    for (const Var& in : inputs) {
      detail::require(in.tape() == this, "mixing nodes from different tapes");
      needs = needs || nodes_[in.id()].requires_grad;
    }
    return push(std::move(value), needs, needs ? std::move(backward) : nullptr);
  }

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  const Matrix& grad(std::size_t id) const {
    const Node& node = nodes_[id];
    if (!node.has_grad) {
      // Never reached by backward(): gradient is identically zero.
      zero_.setZero(node.value.rows(), node.value.cols());
      return zero_;
    }
    return node.grad;
  }

  /// grad(id) += contribution, allocating on first use.
  template <class Expr>
  void accumulate(std::size_t id, const Expr& contribution) {
    Node& node = nodes_[id];
    if (!node.requires_grad) return;
    if (!node.has_grad) {
      node.grad = contribution;
      node.has_grad = true;
    } else {
      node.grad += contribution;
    }
  }

  /// Seeds d(root)/d(root) = 1 and propagates to every node that requires it.
  void backward(Var root) {
    detail::require(root.tape() == this, "backward() on a node from another tape");
    detail::require(root.rows() == 1 && root.cols() == 1, "backward() needs a scalar root");
    if (!std::isfinite(root.scalar())) throw DivergenceError("non-finite loss in backward()");
    for (Node& node : nodes_) node.has_grad = false;
    Node& top = nodes_[root.id()];
    top.grad = Matrix::Ones(1, 1);
    top.has_grad = true;
    for (std::size_t i = root.id() + 1; i-- > 0;) {
      Node& node = nodes_[i];
      if (node.has_grad && node.backward) node.backward(*this, node.grad);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool has_grad = false;
    Backward backward;
  };

  Var push(Matrix value, bool requires_grad, Backward backward) {
    nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, false, std::move(backward)});
    return Var(this, nodes_.size() - 1);
  }

  std::deque<Node> nodes_;
  mutable Matrix zero_;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }
inline const Matrix& Var::grad() const { return tape_->grad(id_); }
inline bool Var::requires_grad() const { return tape_->requires_grad(id_); }

// ---------------------------------------------------------------------------
// Elementary operations

inline Var matmul(Var a, Var b) {
  detail::require(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Tape& t = *a.tape();
  return t.record(a.value() * b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (a.requires_grad()) t.accumulate(a.id(), g * b.value().transpose());
    if (b.requires_grad()) t.accumulate(b.id(), a.value().transpose() * g);
  });
}

inline Var transpose(Var a) {
  Tape& t = *a.tape();
  return t.record(a.value().transpose(), {a},
                  [a](Tape& t, const Matrix& g) { t.accumulate(a.id(), g.transpose()); });
}

inline Var operator+(Var a, Var b) {
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  Tape& t = *a.tape();
  return t.record(a.value() + b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a.id(), g);
    t.accumulate(b.id(), g);
  });
}

inline Var operator-(Var a, Var b) {
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
  Tape& t = *a.tape();
  return t.record(a.value() - b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a.id(), g);
    t.accumulate(b.id(), -g);
  });
}

inline Var operator*(double c, Var a) {
  Tape& t = *a.tape();
  return t.record(c * a.value(), {a}, [a, c](Tape& t, const Matrix& g) { t.accumulate(a.id(), c * g); });
}

inline Var operator*(Var a, double c) { return c * a; }
inline Var operator-(Var a) { return -1.0 * a; }

/// Elementwise product.
inline Var cwise_product(Var a, Var b) {
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "cwise_product: shape mismatch");
  Tape& t = *a.tape();
  return t.record(a.value().cwiseProduct(b.value()), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (a.requires_grad()) t.accumulate(a.id(), g.cwiseProduct(b.value()));
    if (b.requires_grad()) t.accumulate(b.id(), g.cwiseProduct(a.value()));
  });
}

/// x (m x k) plus the row vector b (1 x k) added to every row.
inline Var add_rowwise(Var x, Var b) {
  detail::require(b.rows() == 1 && b.cols() == x.cols(), "add_rowwise: bias shape mismatch");
  Tape& t = *x.tape();
  Matrix out = x.value();
  out.rowwise() += b.value().row(0);
  return t.record(std::move(out), {x, b}, [x, b](Tape& t, const Matrix& g) {
    t.accumulate(x.id(), g);
    if (b.requires_grad()) t.accumulate(b.id(), g.colwise().sum());
  });
}

inline Var sum(Var a) {
  Tape& t = *a.tape();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  const Eigen::Index r = a.rows();
  const Eigen::Index c = a.cols();
  return t.record(std::move(out), {a}, [a, r, c](Tape& t, const Matrix& g) {
    t.accumulate(a.id(), Matrix::Constant(r, c, g(0, 0)));
  });
}

inline Var mean(Var a) {
  detail::require(a.value().size() > 0, "mean of an empty matrix");
  return (1.0 / static_cast<double>(a.value().size())) * sum(a);
}

/// Sum of elementwise products, as a 1x1 node.
inline Var dot(Var a, Var b) { return sum(cwise_product(a, b)); }

inline Var relu(Var a) {
  Tape& t = *a.tape();
  return t.record(a.value().cwiseMax(0.0), {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate(a.id(), (a.value().array() > 0.0).select(g.array(), 0.0).matrix());
  });
}

/// Elementwise clamp to [lo, hi]; gradient passes only strictly inside.
inline Var clip(Var a, double lo, double hi) {
  Tape& t = *a.tape();
  return t.record(a.value().cwiseMax(lo).cwiseMin(hi), {a}, [a, lo, hi](Tape& t, const Matrix& g) {
    const auto inside = (a.value().array() > lo) && (a.value().array() < hi);
    t.accumulate(a.id(), inside.select(g.array(), 0.0).matrix());
  });
}

/// Reads rows*cols consecutive entries of the column vector p, starting at
/// `offset`, as a row-major rows x cols matrix.
inline Var slice(Var p, Eigen::Index offset, Eigen::Index rows, Eigen::Index cols) {
  detail::require(p.cols() == 1, "slice: source must be a column vector");
  detail::require(offset >= 0 && offset + rows * cols <= p.rows(), "slice: out of range");
  Tape& t = *p.tape();
  Matrix out(rows, cols);
  const Matrix& pv = p.value();
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) out(r, c) = pv(offset + r * cols + c, 0);
  }
  const Eigen::Index total = p.rows();
  return t.record(std::move(out), {p}, [p, offset, rows, cols, total](Tape& t, const Matrix& g) {
    Matrix full = Matrix::Zero(total, 1);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) full(offset + r * cols + c, 0) = g(r, c);
    }
    t.accumulate(p.id(), full);
  });
}

// ---------------------------------------------------------------------------
// GroupSort

namespace impl {

/// Sorts each consecutive group of `group` entries of every row ascending
/// (stable, so ties keep their order). `source(r, j)` receives the input
/// column that lands in output column j.
inline Matrix groupsort_rows(const Matrix& x, Eigen::Index group,
                             Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic>* source) {
  pacgen::detail::require(group >= 1 && x.cols() % group == 0,
                          "groupsort: group size must divide the width");
  Matrix out(x.rows(), x.cols());
  if (source) source->resize(x.rows(), x.cols());
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(group));
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index start = 0; start < x.cols(); start += group) {
      if (group == 2) {
        const bool swap = x(r, start + 1) < x(r, start);
        const Eigen::Index lo = swap ? start + 1 : start;
        const Eigen::Index hi = swap ? start : start + 1;
        out(r, start) = x(r, lo);
        out(r, start + 1) = x(r, hi);
        if (source) {
          (*source)(r, start) = lo;
          (*source)(r, start + 1) = hi;
        }
        continue;
      }
      for (Eigen::Index k = 0; k < group; ++k) idx[static_cast<std::size_t>(k)] = start + k;
      std::stable_sort(idx.begin(), idx.end(),
                       [&](Eigen::Index a, Eigen::Index b) { return x(r, a) < x(r, b); });
      for (Eigen::Index k = 0; k < group; ++k) {
        out(r, start + k) = x(r, idx[static_cast<std::size_t>(k)]);
        if (source) (*source)(r, start + k) = idx[static_cast<std::size_t>(k)];
      }
    }
  }
  return out;
}

}  // namespace impl

inline Var groupsort(Var a, Eigen::Index group) {
  Tape& t = *a.tape();
  Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic> source;
  Matrix out = impl::groupsort_rows(a.value(), group, &source);
  return t.record(std::move(out), {a}, [a, source = std::move(source)](Tape& t, const Matrix& g) {
    Matrix back(g.rows(), g.cols());
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      for (Eigen::Index j = 0; j < g.cols(); ++j) back(r, source(r, j)) = g(r, j);
    }
    t.accumulate(a.id(), back);
  });
}

}  // namespace pacgen::ad
