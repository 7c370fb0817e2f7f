#include "lgv/autodiff/param_store.hpp"

#include <stdexcept>

namespace lgv::ad {

int ParamStore::add(std::string name, Matrix init) {
  if (find(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  Tensor t;
  t.name = std::move(name);
  t.grad = Matrix::Zero(init.rows(), init.cols());
  t.value = std::move(init);
  tensors_.push_back(std::move(t));
  return static_cast<int>(tensors_.size() - 1);
}

std::optional<int> ParamStore::find(const std::string& name) const {
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (tensors_[i].name == name) return static_cast<int>(i);
  }
  return std::nullopt;
}

int ParamStore::index_of(const std::string& name) const {
  if (auto i = find(name)) return *i;
  throw std::out_of_range("no parameter named " + name);
}

void ParamStore::zero_grad() {
  for (Tensor& t : tensors_) t.grad.setZero(t.value.rows(), t.value.cols());
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const Tensor& t : tensors_) n += static_cast<std::size_t>(t.value.size());
  return n;
}

double& ParamStore::element(std::size_t flat) {
  for (Tensor& t : tensors_) {
    const auto sz = static_cast<std::size_t>(t.value.size());
    if (flat < sz) return t.value.data()[flat];
    flat -= sz;
  }
  throw std::out_of_range("ParamStore::element");
}

double ParamStore::grad_element(std::size_t flat) const {
  for (const Tensor& t : tensors_) {
    const auto sz = static_cast<std::size_t>(t.value.size());
    if (flat < sz) return t.grad.size() == 0 ? 0.0 : t.grad.data()[flat];
    flat -= sz;
  }
  throw std::out_of_range("ParamStore::grad_element");
}

}  // namespace lgv::ad
