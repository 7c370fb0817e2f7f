#include "lgv/autodiff/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace lgv::ad {

Mlp::Mlp(ParamStore& store, const std::string& prefix, std::vector<int> sizes, Activation hidden,
         std::mt19937_64& rng, double output_scale)
    : store_(&store), sizes_(std::move(sizes)), activation_(hidden) {
  if (sizes_.size() < 2) throw std::invalid_argument("Mlp needs at least input and output sizes");
  const std::size_t layers = sizes_.size() - 1;
  for (std::size_t k = 0; k < layers; ++k) {
    const int in = sizes_[k];
    const int out = sizes_[k + 1];
    double bound = activation_ == Activation::Relu ? std::sqrt(6.0 / in) : std::sqrt(6.0 / (in + out));
    if (k + 1 == layers) bound = std::sqrt(6.0 / (in + out)) * output_scale;
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    Matrix w(in, out);
    for (Index i = 0; i < w.size(); ++i) w.data()[i] = bound * dist(rng);
    weights_.push_back(store.add(prefix + ".w" + std::to_string(k), std::move(w)));
    biases_.push_back(store.add(prefix + ".b" + std::to_string(k), Matrix::Zero(1, out)));
  }
}

Var Mlp::forward(Tape& tape, Var x, MlpTrace* trace) const {
  if (x.cols() != in_dim()) throw std::invalid_argument("Mlp::forward: input width mismatch");
  if (trace) trace->hidden.clear();
  Var h = x;
  const std::size_t layers = weights_.size();
  for (std::size_t k = 0; k < layers; ++k) {
    Var w = tape.parameter(*store_, weights_[k]);
    Var b = tape.parameter(*store_, biases_[k]);
    h = add(matmul(h, w), b);
    if (k + 1 < layers) {
      h = activation_ == Activation::Tanh ? tanh(h) : relu(h);
      if (trace) trace->hidden.push_back(h);
    }
  }
  return h;
}

Var Mlp::activation_derivative(Tape& tape, Var hidden) const {
  if (activation_ == Activation::Tanh) return shift(neg(square(hidden)), 1.0);
  Matrix mask = (hidden.value().array() > 0.0).cast<double>();
  return tape.constant(std::move(mask));
}

Var Mlp::input_gradient(Tape& tape, const MlpTrace& trace, Index batch) const {
  if (out_dim() != 1) throw std::logic_error("input_gradient requires a scalar-output network");
  const std::size_t layers = weights_.size();
  Var delta = repeat_rows(transpose(tape.parameter(*store_, weights_[layers - 1])), batch);
  for (std::size_t k = layers - 1; k-- > 0;) {
    delta = mul(delta, activation_derivative(tape, trace.hidden[k]));
    delta = matmul(delta, transpose(tape.parameter(*store_, weights_[k])));
  }
  return delta;
}

Var Mlp::jvp(Tape& tape, const MlpTrace& trace, Var direction) const {
  const std::size_t layers = weights_.size();
  Var d = direction;
  for (std::size_t k = 0; k < layers; ++k) {
    d = matmul(d, tape.parameter(*store_, weights_[k]));
    if (k + 1 < layers) d = mul(d, activation_derivative(tape, trace.hidden[k]));
  }
  return d;
}

}  // namespace lgv::ad
