// Learned latent vector fields over s = (r, cos phi, sin phi, rdot, phidot).
//
// LagrangianDynamics keeps the structure of the Euler-Lagrange equations in
// the angle-aware state: mass matrix M(z) = L L^T + eps I from a network with
// a softplus diagonal, potential V(z) and input matrix g(z), with
// z = (r, cos phi, sin phi). dM/dt is the network JVP along dz/dt. All
// quantities are batched: a state batch is [B x state_width].
#pragma once

#include "lgv/autodiff/adam.hpp"
#include "lgv/autodiff/nn.hpp"

#include <json.hpp>

#include <memory>
#include <random>
#include <string>

namespace lgv {

struct StateLayout {
  int translational = 0;  // m_R
  int rotational = 0;     // m_T
  int control = 0;

  int dof() const { return translational + rotational; }
  int position_width() const { return translational + 2 * rotational; }
  int state_width() const { return position_width() + dof(); }
};

struct DynamicsConfig {
  int hidden = 64;
  int layers = 3;
  bool constant_g = false;
  double mass_eps = 1e-4;
  // Scale of the final-layer initialization of the MLP field (0 = zero field).
  double mlp_output_scale = 1.0;
};

class LatentDynamics {
 public:
  virtual ~LatentDynamics() = default;
  virtual ad::Var rhs(ad::Tape& tape, ad::Var s, ad::Var u) const = 0;
  const StateLayout& layout() const { return layout_; }

 protected:
  explicit LatentDynamics(StateLayout layout) : layout_(layout) {}
  StateLayout layout_;
};

class LagrangianDynamics : public LatentDynamics {
 public:
  LagrangianDynamics(ad::ParamStore& store, const std::string& prefix, StateLayout layout, const DynamicsConfig& config,
                     std::mt19937_64& rng);

  ad::Var rhs(ad::Tape& tape, ad::Var s, ad::Var u) const override;
  // 1/2 qdot^T M qdot + V, [B x 1].
  ad::Var energy(ad::Tape& tape, ad::Var s) const;
  ad::Var potential(ad::Tape& tape, ad::Var positions) const;
  // dV/dq in generalized coordinates, [B x dof].
  ad::Var potential_gradient(ad::Tape& tape, ad::Var positions) const;
  // Row-major flattened matrices: M [B x m*m], g [B x m*u].
  ad::Var mass_matrix(ad::Tape& tape, ad::Var positions) const;
  ad::Var input_matrix(ad::Tape& tape, ad::Var positions) const;

 private:
  struct Factor {
    ad::Var L;
    ad::Var dL;  // invalid unless a direction was given
  };
  Factor cholesky_factor(ad::Tape& tape, ad::Var positions, const ad::Var* direction) const;
  ad::Var mass_from_factor(ad::Tape& tape, ad::Var L) const;

  ad::ParamStore* store_;
  DynamicsConfig config_;
  ad::Mlp mass_net_;
  ad::Mlp potential_net_;
  ad::Mlp input_net_;
  int constant_g_ = -1;
};

// Unstructured ablation: s' = MLP(s, u).
class MlpDynamics : public LatentDynamics {
 public:
  MlpDynamics(ad::ParamStore& store, const std::string& prefix, StateLayout layout, const DynamicsConfig& config,
              std::mt19937_64& rng);
  ad::Var rhs(ad::Tape& tape, ad::Var s, ad::Var u) const override;

 private:
  ad::Mlp net_;
};

ad::Var latent_rhs(const LagrangianDynamics& nets, ad::Tape& tape, ad::Var s, ad::Var u);
ad::Var learned_energy(const LagrangianDynamics& nets, ad::Tape& tape, ad::Var s);
ad::Var mlp_rhs(const MlpDynamics& net, ad::Tape& tape, ad::Var s, ad::Var u);

// Checkpoint file: 8-byte little-endian header length, JSON header, then
// float32 little-endian payload: every tensor in header order, followed by
// the Adam first and second moments when "optimizer" is present.
void write_checkpoint(const std::string& path, const ad::ParamStore& store, const nlohmann::json& hyper,
                      const ad::Adam* optimizer = nullptr);
// Loads values into a store with the same names and shapes and returns the
// "hyper" object. Moments and step are restored when `optimizer` is given
// and the file carries them.
nlohmann::json read_checkpoint(const std::string& path, ad::ParamStore& store, ad::Adam* optimizer = nullptr);
nlohmann::json read_checkpoint_header(const std::string& path);

}  // namespace lgv
