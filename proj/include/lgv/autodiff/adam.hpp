#pragma once

#include "lgv/autodiff/param_store.hpp"

#include <cstdint>
#include <vector>

namespace lgv::ad {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Round parameters and moments to binary32 after every step so that a
  // float32 checkpoint captures the optimizer state exactly.
  bool float32_state = true;
};

// Adaptive moment estimation with bias-corrected first and second moments.
class Adam {
 public:
  Adam() = default;
  Adam(const ParamStore& store, AdamConfig config);

  void step(ParamStore& store);

  std::int64_t steps() const { return steps_; }
  void set_steps(std::int64_t s) { steps_ = s; }
  const AdamConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }

  std::vector<Matrix>& first_moments() { return m_; }
  std::vector<Matrix>& second_moments() { return v_; }
  const std::vector<Matrix>& first_moments() const { return m_; }
  const std::vector<Matrix>& second_moments() const { return v_; }

 private:
  AdamConfig config_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::int64_t steps_ = 0;
};

// Rounds every element to the nearest binary32 value.
void round_to_float32(Matrix& m);

}  // namespace lgv::ad
