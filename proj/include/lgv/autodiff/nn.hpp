#pragma once

#include "lgv/autodiff/ops.hpp"
#include "lgv/autodiff/param_store.hpp"

#include <random>
#include <string>
#include <vector>

namespace lgv::ad {

enum class Activation { Tanh, Relu };

// Intermediate values of one forward pass, kept so that input gradients and
// Jacobian-vector products can be expressed as further taped ops.
struct MlpTrace {
  std::vector<Var> hidden;  // post-activation of each hidden layer
};

// Fully connected network. Weights are stored [in x out] so a batch of row
// vectors maps as y = x W + b. The output layer is linear.
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParamStore& store, const std::string& prefix, std::vector<int> sizes, Activation hidden,
      std::mt19937_64& rng, double output_scale = 1.0);

  Var forward(Tape& tape, Var x, MlpTrace* trace = nullptr) const;

  // d(output)/d(input) for a single-output network, [B x in]; differentiable.
  Var input_gradient(Tape& tape, const MlpTrace& trace, Index batch) const;
  // Directional derivative of the outputs along `direction` ([B x in]).
  Var jvp(Tape& tape, const MlpTrace& trace, Var direction) const;

  int in_dim() const { return sizes_.front(); }
  int out_dim() const { return sizes_.back(); }
  const std::vector<int>& sizes() const { return sizes_; }
  Activation activation() const { return activation_; }

 private:
  Var activation_derivative(Tape& tape, Var hidden) const;

  ParamStore* store_ = nullptr;
  std::vector<int> sizes_;
  std::vector<int> weights_;
  std::vector<int> biases_;
  Activation activation_ = Activation::Tanh;
};

}  // namespace lgv::ad
