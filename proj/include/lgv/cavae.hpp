// Observation models mapping per-body image stacks to posteriors over the
// generalized coordinates and latent positions back to images.
//
// Images travel as one [B x H*W] matrix per body (row-major pixels). Latent
// positions are [B x position_width] rows (r, cos phi, sin phi), with
// translational coordinates first, matching the latent state layout.
#pragma once

#include "lgv/autodiff/nn.hpp"
#include "lgv/distributions.hpp"
#include "lgv/system_spec.hpp"

#include <memory>
#include <random>
#include <string>
#include <vector>

namespace lgv {

enum class VaeKind { CoordinateAware, Traditional };
std::string to_string(VaeKind k);
VaeKind vae_kind_from_string(const std::string& name);

struct VaeConfig {
  int height = 32;
  int width = 32;
  int hidden = 256;       // encoder (and traditional decoder) hidden width
  int canvas_hidden = 16;
  double window_scale = 1.0;
  double canvas_bias = -5.0;  // initial canvas logit, a near-black background
};

// Posterior of one coordinate. Translational: mean [B x 1], log_var [B x 1].
// Rotational: mean is the unit direction (cos, sin) [B x 2], norm the
// pre-normalization length of (alpha, beta) [B x 1], kappa [B x 1].
struct CoordPosterior {
  CoordKind kind = CoordKind::Rotational;
  ad::Var mean;
  ad::Var log_var;
  ad::Var norm;
  ad::Var kappa;
};
using Posterior = std::vector<CoordPosterior>;  // indexed by coordinate

class ObservationModel {
 public:
  virtual ~ObservationModel() = default;
  // bodies: n_bodies matrices of [B x H*W].
  virtual Posterior encode(ad::Tape& tape, const std::vector<ad::Var>& bodies) const = 0;
  virtual std::vector<ad::Var> decode(ad::Tape& tape, ad::Var positions) const = 0;
  virtual VaeKind kind() const = 0;

  const SystemSpec& spec() const { return spec_; }
  const VaeConfig& config() const { return config_; }

 protected:
  ObservationModel(SystemSpec spec, VaeConfig config) : spec_(std::move(spec)), config_(config) {}
  SystemSpec spec_;
  VaeConfig config_;
};

class CoordinateAwareVae : public ObservationModel {
 public:
  CoordinateAwareVae(ad::ParamStore& store, const SystemSpec& spec, const VaeConfig& config, std::mt19937_64& rng);

  Posterior encode(ad::Tape& tape, const std::vector<ad::Var>& bodies) const override;
  std::vector<ad::Var> decode(ad::Tape& tape, ad::Var positions) const override;
  VaeKind kind() const override { return VaeKind::CoordinateAware; }

  // Canonical body images [1 x H*W] in [0, 1].
  ad::Var canvas(ad::Tape& tape, int body) const;
  std::vector<ad::Var> lengths(ad::Tape& tape) const;
  // Attention window of coordinate j given the dependency coordinates.
  ad::Var window(ad::Tape& tape, int j, ad::Var image, const std::vector<ad::Var>& coords) const;

 private:
  ad::ParamStore* store_;
  std::vector<int> order_;
  std::vector<ad::Mlp> heads_;
  std::vector<ad::Mlp> canvases_;
  std::vector<int> lengths_;
};

// Ablation: one MLP over all channels to every coordinate's parameters and
// one MLP from positions to all channels.
class TraditionalVae : public ObservationModel {
 public:
  TraditionalVae(ad::ParamStore& store, const SystemSpec& spec, const VaeConfig& config, std::mt19937_64& rng);

  Posterior encode(ad::Tape& tape, const std::vector<ad::Var>& bodies) const override;
  std::vector<ad::Var> decode(ad::Tape& tape, ad::Var positions) const override;
  VaeKind kind() const override { return VaeKind::Traditional; }

 private:
  ad::Mlp encoder_;
  ad::Mlp decoder_;
};

std::unique_ptr<ObservationModel> make_observation_model(VaeKind kind, ad::ParamStore& store, const SystemSpec& spec,
                                                         const VaeConfig& config, std::mt19937_64& rng);

// Per-coordinate views of a position batch ([B x 1] or [B x 2] (cos, sin))
// and the inverse packing.
std::vector<ad::Var> coords_from_positions(const SystemSpec& spec, ad::Var positions);
ad::Var positions_from_coords(const SystemSpec& spec, const std::vector<ad::Var>& coords);

ad::Var posterior_means(const SystemSpec& spec, const Posterior& post);
// Reparametrized draw of the positions; differentiable into the posterior.
ad::Var sample_coords(const SystemSpec& spec, const Posterior& post, std::mt19937_64& rng);

// First-order velocity from two position batches: rdot = (r1 - r0) / dt,
// phidot = ((s1 - s0) c0 - (c1 - c0) s0) / dt = sin(phi1 - phi0) / dt.
ad::Var estimate_velocity(const SystemSpec& spec, ad::Var pos0, ad::Var pos1, double dt);
Eigen::VectorXd estimate_velocity(const SystemSpec& spec, const Eigen::VectorXd& pos0, const Eigen::VectorXd& pos1,
                                  double dt);

struct InitialState {
  ad::Var state;  // [B x state_width]
  Posterior post0;
  Posterior post1;
};

// Positions drawn from the frame-0 posterior (or its mean when `sample` is
// false); velocities from the means of frames 0 and 1.
InitialState build_initial_state(ad::Tape& tape, const ObservationModel& model, const std::vector<ad::Var>& x0,
                                 const std::vector<ad::Var>& x1, double dt, std::mt19937_64& rng, bool sample = true);

}  // namespace lgv
