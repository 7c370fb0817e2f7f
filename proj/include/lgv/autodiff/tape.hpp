// Reverse-mode automatic differentiation over dense row-major matrices.
//
// A Tape records every operation performed on Var handles together with a
// backward closure. Calling Tape::backward on a 1x1 root propagates adjoints
// in reverse creation order and finally accumulates parameter adjoints into
// the owning ParamStore. Higher derivatives are not taped: models that need
// input gradients of a network (e.g. dV/ds) express them explicitly with
// first-order ops so that the outer backward pass differentiates through them.
#pragma once

#include <Eigen/Dense>

#include <functional>
#include <initializer_list>
#include <unordered_map>
#include <vector>

namespace lgv::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

class Tape;
class ParamStore;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  // Value of a 1x1 node.
  double scalar() const;
  bool requires_grad() const;

  Tape& tape() const { return *tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, int)>;

  Tape() { nodes_.reserve(1024); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var constant(double value);
  // Leaf whose gradient is retained after backward (used by tests and probes).
  Var variable(Matrix value);
  // Leaf bound to a ParamStore tensor; repeated calls return the same node.
  // When `frozen` is set on the tape, parameters are recorded as constants.
  Var parameter(ParamStore& store, int index);

  // Records an op node. The backward closure is dropped when no input
  // requires a gradient.
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward);
  Var record(Matrix value, const std::vector<Var>& inputs, Backward backward);

  void backward(Var root);

  const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  // Adjoint of a node after backward; an empty matrix if none reached it.
  const Matrix& grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id())].grad; }
  const Matrix& grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

  template <typename Expr>
  void accumulate(int id, const Eigen::MatrixBase<Expr>& g) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }
  template <typename Expr>
  void accumulate(Var v, const Eigen::MatrixBase<Expr>& g) {
    accumulate(v.id(), g);
  }

  std::size_t size() const { return nodes_.size(); }

  // Parameters are recorded as constants (inference without gradients).
  void set_frozen(bool frozen) { frozen_ = frozen; }
  bool frozen() const { return frozen_; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
    ParamStore* store = nullptr;
    int param_index = -1;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const ParamStore*, std::unordered_map<int, int>> param_nodes_;
  bool frozen_ = false;
};

}  // namespace lgv::ad
