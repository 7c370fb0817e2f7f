#include "lgv/cavae.hpp"

#include "lgv/errors.hpp"
#include "lgv/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace lgv {

using ad::Index;
using ad::Matrix;
using ad::Var;

std::string to_string(VaeKind k) { return k == VaeKind::CoordinateAware ? "cavae" : "traditional"; }

VaeKind vae_kind_from_string(const std::string& name) {
  if (name == "cavae" || name == "coordinate-aware") return VaeKind::CoordinateAware;
  if (name == "traditional") return VaeKind::Traditional;
  throw ConfigError("unknown vae kind '" + name + "' (expected coordinate-aware, cavae or traditional)");
}

namespace {

int head_width(CoordKind k) { return k == CoordKind::Translational ? 2 : 3; }

// Splits raw head outputs into a coordinate posterior.
CoordPosterior make_posterior(CoordKind kind, Var raw) {
  const Matrix& v = raw.value();
  if (!v.allFinite()) throw Error("encoder produced a non-finite output");
  CoordPosterior p;
  p.kind = kind;
  if (kind == CoordKind::Translational) {
    p.mean = ad::col(raw, 0);
    p.log_var = ad::col(raw, 1);
  } else {
    auto [dir, norm] = ad::normalize_direction(ad::slice_cols(raw, 0, 2));
    p.mean = dir;
    p.norm = norm;
    p.kappa = ad::exp(ad::col(raw, 2));
  }
  return p;
}

void check_bodies(const SystemSpec& spec, const VaeConfig& cfg, const std::vector<Var>& bodies) {
  if (static_cast<int>(bodies.size()) != spec.n_bodies) throw std::invalid_argument("encode: one image per body expected");
  for (const auto& b : bodies) {
    if (b.cols() != static_cast<Index>(cfg.height) * cfg.width || b.rows() != bodies.front().rows()) {
      throw std::invalid_argument("encode: body images must be [B x H*W]");
    }
  }
}

}  // namespace

std::vector<Var> coords_from_positions(const SystemSpec& spec, Var positions) {
  if (positions.cols() != spec.position_width()) throw std::invalid_argument("positions width mismatch");
  const int mr = spec.translational_count(), mt = spec.rotational_count();
  std::vector<Var> out;
  for (int j = 0; j < spec.dof(); ++j) {
    if (j < mr) {
      out.push_back(ad::col(positions, j));
    } else {
      const int k = j - mr;
      out.push_back(ad::hcat({ad::col(positions, mr + k), ad::col(positions, mr + mt + k)}));
    }
  }
  return out;
}

Var positions_from_coords(const SystemSpec& spec, const std::vector<Var>& coords) {
  const int mr = spec.translational_count();
  std::vector<Var> r, c, s;
  for (int j = 0; j < spec.dof(); ++j) {
    const Var& q = coords.at(static_cast<std::size_t>(j));
    if (j < mr) {
      r.push_back(q);
    } else {
      c.push_back(ad::col(q, 0));
      s.push_back(ad::col(q, 1));
    }
  }
  std::vector<Var> all;
  all.insert(all.end(), r.begin(), r.end());
  all.insert(all.end(), c.begin(), c.end());
  all.insert(all.end(), s.begin(), s.end());
  return ad::hcat(all);
}

Var posterior_means(const SystemSpec& spec, const Posterior& post) {
  std::vector<Var> coords;
  for (const auto& p : post) coords.push_back(p.mean);
  return positions_from_coords(spec, coords);
}

Var sample_coords(const SystemSpec& spec, const Posterior& post, std::mt19937_64& rng) {
  std::vector<Var> coords;
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform(std::nextafter(0.0, 1.0), 1.0);  // (0, 1)
  for (const auto& p : post) {
    const Index batch = p.mean.rows();
    if (p.kind == CoordKind::Translational) {
      Matrix eps(batch, 1);
      for (Index b = 0; b < batch; ++b) eps(b, 0) = normal(rng);
      coords.push_back(ad::gauss_sample(p.mean, p.log_var, eps));
    } else {
      Matrix u(batch, 1);
      for (Index b = 0; b < batch; ++b) u(b, 0) = uniform(rng);
      coords.push_back(ad::vm_sample(p.mean, p.kappa, u));
    }
  }
  return positions_from_coords(spec, coords);
}

Var estimate_velocity(const SystemSpec& spec, Var pos0, Var pos1, double dt) {
  if (!(dt > 0.0)) throw ConfigError("estimate_velocity: dt must be positive");
  const int mr = spec.translational_count(), mt = spec.rotational_count();
  std::vector<Var> parts;
  if (mr > 0) parts.push_back(ad::scale(ad::sub(ad::slice_cols(pos1, 0, mr), ad::slice_cols(pos0, 0, mr)), 1.0 / dt));
  if (mt > 0) {
    Var c0 = ad::slice_cols(pos0, mr, mt), s0 = ad::slice_cols(pos0, mr + mt, mt);
    Var c1 = ad::slice_cols(pos1, mr, mt), s1 = ad::slice_cols(pos1, mr + mt, mt);
    parts.push_back(ad::scale(ad::sub(ad::mul(s1, c0), ad::mul(c1, s0)), 1.0 / dt));
  }
  return ad::hcat(parts);
}

Eigen::VectorXd estimate_velocity(const SystemSpec& spec, const Eigen::VectorXd& pos0, const Eigen::VectorXd& pos1,
                                  double dt) {
  if (!(dt > 0.0)) throw ConfigError("estimate_velocity: dt must be positive");
  const int mr = spec.translational_count(), mt = spec.rotational_count();
  Eigen::VectorXd v(spec.dof());
  for (int i = 0; i < mr; ++i) v(i) = (pos1(i) - pos0(i)) / dt;
  for (int k = 0; k < mt; ++k) {
    const double c0 = pos0(mr + k), s0 = pos0(mr + mt + k), c1 = pos1(mr + k), s1 = pos1(mr + mt + k);
    v(mr + k) = (s1 * c0 - c1 * s0) / dt;
  }
  return v;
}

// ---------------------------------------------------------------------------
// Coordinate-aware model

CoordinateAwareVae::CoordinateAwareVae(ad::ParamStore& store, const SystemSpec& spec, const VaeConfig& config,
                                       std::mt19937_64& rng)
    : ObservationModel(spec, config), store_(&store), order_(encoding_order(spec)) {
  const int hw = config.height * config.width;
  for (int j = 0; j < spec.dof(); ++j) {
    const auto& c = spec.coordinates[static_cast<std::size_t>(j)];
    heads_.emplace_back(store, "enc." + c.name, std::vector<int>{hw, config.hidden, config.hidden, head_width(c.kind)},
                        ad::Activation::Relu, rng);
  }
  for (int i = 0; i < spec.n_bodies; ++i) {
    const std::string prefix = "canvas." + std::to_string(i);
    canvases_.emplace_back(store, prefix, std::vector<int>{1, config.canvas_hidden, hw}, ad::Activation::Tanh, rng);
    store.value(store.index_of(prefix + ".b1")).setConstant(config.canvas_bias);
  }
  for (std::size_t k = 0; k < spec.length_init.size(); ++k) {
    lengths_.push_back(store.add("length." + std::to_string(k), Matrix::Constant(1, 1, spec.length_init[k])));
  }
}

Var CoordinateAwareVae::canvas(ad::Tape& tape, int body) const {
  return ad::sigmoid(canvases_.at(static_cast<std::size_t>(body)).forward(tape, tape.constant(Matrix::Ones(1, 1))));
}

std::vector<Var> CoordinateAwareVae::lengths(ad::Tape& tape) const {
  std::vector<Var> out;
  for (int id : lengths_) out.push_back(tape.parameter(*store_, id));
  return out;
}

Var CoordinateAwareVae::window(ad::Tape& tape, int j, Var image, const std::vector<Var>& coords) const {
  const FrameRule& rule = spec_.encoder_frames.at(static_cast<std::size_t>(j));
  if (rule.is_identity() && config_.window_scale == 1.0) return image;
  const ad::FrameVars f = ad::eval_frame(tape, spec_, rule, coords, lengths(tape), image.rows());
  return ad::grid_sample(image, ad::transform_rows(f, false, config_.window_scale), config_.height, config_.width);
}

Posterior CoordinateAwareVae::encode(ad::Tape& tape, const std::vector<Var>& bodies) const {
  check_bodies(spec_, config_, bodies);
  Posterior post(static_cast<std::size_t>(spec_.dof()));
  std::vector<Var> means(static_cast<std::size_t>(spec_.dof()));
  for (int j : order_) {
    const auto& c = spec_.coordinates[static_cast<std::size_t>(j)];
    const Var win = window(tape, j, bodies.at(static_cast<std::size_t>(c.body)), means);
    post[static_cast<std::size_t>(j)] = make_posterior(c.kind, heads_[static_cast<std::size_t>(j)].forward(tape, win));
    means[static_cast<std::size_t>(j)] = post[static_cast<std::size_t>(j)].mean;
  }
  return post;
}

std::vector<Var> CoordinateAwareVae::decode(ad::Tape& tape, Var positions) const {
  const std::vector<Var> coords = coords_from_positions(spec_, positions);
  const std::vector<Var> len = lengths(tape);
  const Index batch = positions.rows();
  std::vector<Var> out;
  for (int i = 0; i < spec_.n_bodies; ++i) {
    const FrameRule& rule = spec_.decoder_frames[static_cast<std::size_t>(i)];
    const Var img = canvas(tape, i);
    if (rule.is_identity()) {
      out.push_back(ad::repeat_rows(img, batch));
      continue;
    }
    const ad::FrameVars f = ad::eval_frame(tape, spec_, rule, coords, len, batch);
    out.push_back(ad::grid_sample(img, ad::transform_rows(f, true), config_.height, config_.width));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Traditional model

namespace {

int total_head_width(const SystemSpec& spec) {
  int w = 0;
  for (const auto& c : spec.coordinates) w += head_width(c.kind);
  return w;
}

}  // namespace

TraditionalVae::TraditionalVae(ad::ParamStore& store, const SystemSpec& spec, const VaeConfig& config,
                               std::mt19937_64& rng)
    : ObservationModel(spec, config) {
  const int in = spec.n_bodies * config.height * config.width;
  encoder_ = ad::Mlp(store, "bb_enc", {in, config.hidden, config.hidden, total_head_width(spec)}, ad::Activation::Relu,
                     rng);
  decoder_ = ad::Mlp(store, "bb_dec", {spec.position_width(), config.hidden, config.hidden, in}, ad::Activation::Relu,
                     rng);
  store.value(store.index_of("bb_dec.b2")).setConstant(config.canvas_bias);
}

Posterior TraditionalVae::encode(ad::Tape& tape, const std::vector<Var>& bodies) const {
  check_bodies(spec_, config_, bodies);
  const Var raw = encoder_.forward(tape, ad::hcat(bodies));
  Posterior post;
  Index offset = 0;
  for (const auto& c : spec_.coordinates) {
    const int w = head_width(c.kind);
    post.push_back(make_posterior(c.kind, ad::slice_cols(raw, offset, w)));
    offset += w;
  }
  return post;
}

std::vector<Var> TraditionalVae::decode(ad::Tape& tape, Var positions) const {
  const Var all = ad::sigmoid(decoder_.forward(tape, positions));
  const Index hw = static_cast<Index>(config_.height) * config_.width;
  std::vector<Var> out;
  for (int i = 0; i < spec_.n_bodies; ++i) out.push_back(ad::slice_cols(all, i * hw, hw));
  return out;
}

std::unique_ptr<ObservationModel> make_observation_model(VaeKind kind, ad::ParamStore& store, const SystemSpec& spec,
                                                         const VaeConfig& config, std::mt19937_64& rng) {
  if (kind == VaeKind::CoordinateAware) return std::make_unique<CoordinateAwareVae>(store, spec, config, rng);
  return std::make_unique<TraditionalVae>(store, spec, config, rng);
}

InitialState build_initial_state(ad::Tape& tape, const ObservationModel& model, const std::vector<Var>& x0,
                                 const std::vector<Var>& x1, double dt, std::mt19937_64& rng, bool sample) {
  const SystemSpec& spec = model.spec();
  InitialState init;
  init.post0 = model.encode(tape, x0);
  init.post1 = model.encode(tape, x1);
  const Var m0 = posterior_means(spec, init.post0);
  const Var m1 = posterior_means(spec, init.post1);
  const Var pos = sample ? sample_coords(spec, init.post0, rng) : m0;
  init.state = ad::hcat({pos, estimate_velocity(spec, m0, m1, dt)});
  return init;
}

}  // namespace lgv
