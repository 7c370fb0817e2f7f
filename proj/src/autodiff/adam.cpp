#include "lgv/autodiff/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace lgv::ad {

void round_to_float32(Matrix& m) {
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<double>(static_cast<float>(m.data()[i]));
}

Adam::Adam(const ParamStore& store, AdamConfig config) : config_(config) {
  for (const auto& t : store) {
    m_.push_back(Matrix::Zero(t.value.rows(), t.value.cols()));
    v_.push_back(Matrix::Zero(t.value.rows(), t.value.cols()));
  }
}

void Adam::step(ParamStore& store) {
  if (static_cast<int>(m_.size()) != store.size()) throw std::logic_error("Adam: parameter count changed");
  ++steps_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  const double lr = config_.learning_rate;
  for (int i = 0; i < store.size(); ++i) {
    auto& t = store[i];
    if (t.grad.size() == 0) continue;
    Matrix& m = m_[static_cast<std::size_t>(i)];
    Matrix& v = v_[static_cast<std::size_t>(i)];
    m = b1 * m + (1.0 - b1) * t.grad;
    v = b2 * v + (1.0 - b2) * t.grad.cwiseAbs2();
    t.value.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + config_.epsilon);
    if (config_.float32_state) {
      round_to_float32(t.value);
      round_to_float32(m);
      round_to_float32(v);
    }
  }
}

}  // namespace lgv::ad
