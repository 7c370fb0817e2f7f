#pragma once

#include "lgv/autodiff/tape.hpp"

#include <optional>
#include <string>
#include <vector>

namespace lgv::ad {

// Named, shaped parameter tensors with gradient accumulators. Insertion order
// is the canonical order used by checkpoints and optimizers.
class ParamStore {
 public:
  struct Tensor {
    std::string name;
    Matrix value;
    Matrix grad;
  };

  int add(std::string name, Matrix init);

  int size() const { return static_cast<int>(tensors_.size()); }
  const Tensor& operator[](int i) const { return tensors_[static_cast<std::size_t>(i)]; }
  Tensor& operator[](int i) { return tensors_[static_cast<std::size_t>(i)]; }

  std::optional<int> find(const std::string& name) const;
  int index_of(const std::string& name) const;  // throws std::out_of_range

  Matrix& value(int i) { return tensors_[static_cast<std::size_t>(i)].value; }
  const Matrix& value(int i) const { return tensors_[static_cast<std::size_t>(i)].value; }
  Matrix& grad(int i) { return tensors_[static_cast<std::size_t>(i)].grad; }

  void zero_grad();
  std::size_t scalar_count() const;

  // Flat (index, element) addressing, used by finite-difference probes.
  double& element(std::size_t flat);
  double grad_element(std::size_t flat) const;

  auto begin() { return tensors_.begin(); }
  auto end() { return tensors_.end(); }
  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }

 private:
  std::vector<Tensor> tensors_;
};

}  // namespace lgv::ad
