#include "lgv/autodiff/tape.hpp"

#include "lgv/autodiff/param_store.hpp"

#include <stdexcept>
#include <string>

namespace lgv::ad {

const Matrix& Var::value() const { return tape_->value(id_); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) {
    throw std::logic_error("Var::scalar on a " + std::to_string(v.rows()) + "x" +
                           std::to_string(v.cols()) + " node");
  }
  return v(0, 0);
}

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::constant(double value) {
  Matrix m(1, 1);
  m(0, 0) = value;
  return constant(std::move(m));
}

Var Tape::variable(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::parameter(ParamStore& store, int index) {
  auto& cache = param_nodes_[&store];
  if (auto it = cache.find(index); it != cache.end()) return {this, it->second};
  Node n;
  n.value = store.value(index);
  n.requires_grad = !frozen_;
  n.store = frozen_ ? nullptr : &store;
  n.param_index = index;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size() - 1);
  cache.emplace(index, id);
  return {this, id};
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
  bool needs = false;
  for (const Var& in : inputs) needs = needs || nodes_[static_cast<std::size_t>(in.id())].requires_grad;
  Node n;
  n.value = std::move(value);
  n.requires_grad = needs;
  if (needs) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::record(Matrix value, const std::vector<Var>& inputs, Backward backward) {
  bool needs = false;
  for (const Var& in : inputs) needs = needs || nodes_[static_cast<std::size_t>(in.id())].requires_grad;
  Node n;
  n.value = std::move(value);
  n.requires_grad = needs;
  if (needs) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

void Tape::backward(Var root) {
  if (&root.tape() != this) throw std::logic_error("backward: root belongs to another tape");
  Node& r = nodes_[static_cast<std::size_t>(root.id())];
  if (r.value.rows() != 1 || r.value.cols() != 1) {
    throw std::logic_error("backward: root must be 1x1");
  }
  if (!r.requires_grad) return;
  r.grad = Matrix::Ones(1, 1);
  for (int id = root.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, id);
  }
  for (Node& n : nodes_) {
    if (n.store == nullptr || n.grad.size() == 0) continue;
    Matrix& g = n.store->grad(n.param_index);
    if (g.size() == 0) {
      g = n.grad;
    } else {
      g += n.grad;
    }
  }
}

}  // namespace lgv::ad
