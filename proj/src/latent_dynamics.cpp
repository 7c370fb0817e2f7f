#include "lgv/latent_dynamics.hpp"

#include "lgv/errors.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace lgv {

using ad::Index;
using ad::Matrix;
using ad::Var;

namespace {

std::vector<int> hidden_sizes(int in, int out, const DynamicsConfig& c) {
  std::vector<int> sizes{in};
  for (int k = 0; k < c.layers; ++k) sizes.push_back(c.hidden);
  sizes.push_back(out);
  return sizes;
}

void check_layout(const StateLayout& l) {
  if (l.translational < 0 || l.rotational < 0 || l.dof() == 0 || l.control < 0) {
    throw std::invalid_argument("StateLayout: need at least one coordinate");
  }
}

struct StateParts {
  Var positions;  // [B x w]
  Var qdot;       // [B x m]
  Var cos;        // [B x m_T] or invalid
  Var sin;
  Var rdot;       // [B x m_R] or invalid
  Var phidot;     // [B x m_T] or invalid
};

StateParts split_state(const StateLayout& l, Var s) {
  if (s.cols() != l.state_width()) throw std::invalid_argument("latent state width mismatch");
  const Index mr = l.translational, mt = l.rotational, w = l.position_width();
  StateParts p;
  p.positions = ad::slice_cols(s, 0, w);
  p.qdot = ad::slice_cols(s, w, l.dof());
  if (mt > 0) {
    p.cos = ad::slice_cols(s, mr, mt);
    p.sin = ad::slice_cols(s, mr + mt, mt);
    p.phidot = ad::slice_cols(s, w + mr, mt);
  }
  if (mr > 0) p.rdot = ad::slice_cols(s, w, mr);
  return p;
}

// dz/dt for z = (r, cos phi, sin phi): (rdot, -sin phi phidot, cos phi phidot).
Var position_rate(const StateParts& p) {
  std::vector<Var> parts;
  if (p.rdot.valid()) parts.push_back(p.rdot);
  if (p.phidot.valid()) {
    parts.push_back(ad::neg(ad::mul(p.sin, p.phidot)));
    parts.push_back(ad::mul(p.cos, p.phidot));
  }
  return ad::hcat(parts);
}

}  // namespace

LagrangianDynamics::LagrangianDynamics(ad::ParamStore& store, const std::string& prefix, StateLayout layout,
                                       const DynamicsConfig& config, std::mt19937_64& rng)
    : LatentDynamics(layout), store_(&store), config_(config) {
  check_layout(layout);
  const int w = layout.position_width(), m = layout.dof(), u = layout.control;
  mass_net_ = ad::Mlp(store, prefix + ".mass", hidden_sizes(w, m * (m + 1) / 2, config), ad::Activation::Tanh, rng);
  potential_net_ = ad::Mlp(store, prefix + ".potential", hidden_sizes(w, 1, config), ad::Activation::Tanh, rng);
  if (u > 0) {
    if (config.constant_g) {
      constant_g_ = store.add(prefix + ".input_const", Matrix::Identity(m, u).reshaped<Eigen::RowMajor>().transpose());
    } else {
      input_net_ = ad::Mlp(store, prefix + ".input", hidden_sizes(w, m * u, config), ad::Activation::Tanh, rng);
    }
  }
}

LagrangianDynamics::Factor LagrangianDynamics::cholesky_factor(ad::Tape& tape, Var positions,
                                                               const Var* direction) const {
  const Index m = layout_.dof();
  const Index batch = positions.rows();
  ad::MlpTrace trace;
  Var raw = mass_net_.forward(tape, positions, direction ? &trace : nullptr);
  Var draw = direction ? mass_net_.jvp(tape, trace, *direction) : Var();
  Var zero = tape.constant(Matrix::Zero(batch, 1));
  std::vector<Var> l, dl;
  Index k = 0;
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < m; ++j) {
      if (j > i) {
        l.push_back(zero);
        if (direction) dl.push_back(zero);
        continue;
      }
      Var rk = ad::col(raw, k);
      if (i == j) {
        l.push_back(ad::softplus(rk));
        if (direction) dl.push_back(ad::mul(ad::sigmoid(rk), ad::col(draw, k)));
      } else {
        l.push_back(rk);
        if (direction) dl.push_back(ad::col(draw, k));
      }
      ++k;
    }
  }
  Factor f;
  f.L = ad::hcat(l);
  if (direction) f.dL = ad::hcat(dl);
  return f;
}

Var LagrangianDynamics::mass_from_factor(ad::Tape& tape, Var L) const {
  const Index m = layout_.dof();
  Matrix eps = (config_.mass_eps * Matrix::Identity(m, m)).reshaped<Eigen::RowMajor>().transpose();
  Var llt = ad::bmm(L, ad::btranspose(L, m, m), m, m, m);
  return ad::add(llt, ad::repeat_rows(tape.constant(eps), L.rows()));
}

Var LagrangianDynamics::mass_matrix(ad::Tape& tape, Var positions) const {
  return mass_from_factor(tape, cholesky_factor(tape, positions, nullptr).L);
}

Var LagrangianDynamics::potential(ad::Tape& tape, Var positions) const {
  return potential_net_.forward(tape, positions);
}

namespace {

// Generalized force -dV/dq from dV/dz; for an angle,
// dV/dphi = -sin phi dV/dcos + cos phi dV/dsin.
Var generalized_gradient(const StateLayout& l, Var dvdz, Var positions) {
  const Index mr = l.translational, mt = l.rotational;
  std::vector<Var> parts;
  if (mr > 0) parts.push_back(ad::slice_cols(dvdz, 0, mr));
  if (mt > 0) {
    Var c = ad::slice_cols(positions, mr, mt), s = ad::slice_cols(positions, mr + mt, mt);
    Var dc = ad::slice_cols(dvdz, mr, mt), ds = ad::slice_cols(dvdz, mr + mt, mt);
    parts.push_back(ad::sub(ad::mul(c, ds), ad::mul(s, dc)));
  }
  return ad::hcat(parts);
}

}  // namespace

Var LagrangianDynamics::potential_gradient(ad::Tape& tape, Var positions) const {
  ad::MlpTrace trace;
  potential_net_.forward(tape, positions, &trace);
  return generalized_gradient(layout_, potential_net_.input_gradient(tape, trace, positions.rows()), positions);
}

Var LagrangianDynamics::input_matrix(ad::Tape& tape, Var positions) const {
  if (layout_.control == 0) throw std::logic_error("input_matrix: system has no control inputs");
  if (constant_g_ >= 0) return ad::repeat_rows(tape.parameter(*store_, constant_g_), positions.rows());
  return input_net_.forward(tape, positions);
}

Var LagrangianDynamics::rhs(ad::Tape& tape, Var s, Var u) const {
  const StateParts p = split_state(layout_, s);
  const Index m = layout_.dof();
  const Var zdot = position_rate(p);
  const Factor f = cholesky_factor(tape, p.positions, &zdot);
  const Var M = mass_from_factor(tape, f.L);
  const Var Lt = ad::btranspose(f.L, m, m);
  const Var Mdot = ad::add(ad::bmm(f.dL, Lt, m, m, m), ad::btranspose(ad::bmm(f.dL, Lt, m, m, m), m, m));

  // M qddot = -1/2 Mdot qdot - dV/dq + g u
  Var force = ad::neg(potential_gradient(tape, p.positions));
  force = ad::sub(force, ad::scale(ad::bmv(Mdot, p.qdot, m, m), 0.5));
  if (layout_.control > 0) {
    if (u.cols() != layout_.control || u.rows() != s.rows()) throw std::invalid_argument("latent_rhs: control shape");
    force = ad::add(force, ad::bmv(input_matrix(tape, p.positions), u, m, layout_.control));
  }
  const Var qddot = ad::bsolve(M, force);
  return ad::hcat({zdot, qddot});
}

Var LagrangianDynamics::energy(ad::Tape& tape, Var s) const {
  const StateParts p = split_state(layout_, s);
  const Index m = layout_.dof();
  const Var M = mass_matrix(tape, p.positions);
  const Var kinetic = ad::scale(ad::row_sum(ad::mul(ad::bmv(M, p.qdot, m, m), p.qdot)), 0.5);
  return ad::add(kinetic, potential(tape, p.positions));
}

MlpDynamics::MlpDynamics(ad::ParamStore& store, const std::string& prefix, StateLayout layout,
                         const DynamicsConfig& config, std::mt19937_64& rng)
    : LatentDynamics(layout) {
  check_layout(layout);
  net_ = ad::Mlp(store, prefix + ".field",
                 hidden_sizes(layout.state_width() + layout.control, layout.state_width(), config), ad::Activation::Tanh,
                 rng, config.mlp_output_scale);
}

Var MlpDynamics::rhs(ad::Tape& /*tape*/, Var s, Var u) const {
  if (s.cols() != layout_.state_width()) throw std::invalid_argument("mlp_rhs: state width mismatch");
  return net_.forward(s.tape(), layout_.control > 0 ? ad::hcat({s, u}) : s);
}

Var latent_rhs(const LagrangianDynamics& nets, ad::Tape& tape, Var s, Var u) { return nets.rhs(tape, s, u); }
Var learned_energy(const LagrangianDynamics& nets, ad::Tape& tape, Var s) { return nets.energy(tape, s); }
Var mlp_rhs(const MlpDynamics& net, ad::Tape& tape, Var s, Var u) { return net.rhs(tape, s, u); }

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void write_floats(std::ofstream& out, const Matrix& m) {
  std::vector<float> buf(static_cast<std::size_t>(m.size()));
  for (Index i = 0; i < m.size(); ++i) buf[static_cast<std::size_t>(i)] = static_cast<float>(m.data()[i]);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

void read_floats(std::ifstream& in, Matrix& m, const std::string& path) {
  std::vector<float> buf(static_cast<std::size_t>(m.size()));
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!in) throw FormatError("checkpoint '" + path + "' is truncated");
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<double>(buf[static_cast<std::size_t>(i)]);
}

nlohmann::json read_header(std::ifstream& in, const std::string& path) {
  if (!in) throw FormatError("cannot open checkpoint '" + path + "'");
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || len == 0 || len > (1u << 26)) throw FormatError("checkpoint '" + path + "' has a bad header length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw FormatError("checkpoint '" + path + "' is truncated");
  try {
    nlohmann::json h = nlohmann::json::parse(text);
    if (h.value("format", std::string()) != "lgv-checkpoint" || !h.contains("tensors")) {
      throw FormatError("checkpoint '" + path + "' is not an lgv checkpoint");
    }
    return h;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint '" + path + "' header: " + e.what());
  }
}

}  // namespace

void write_checkpoint(const std::string& path, const ad::ParamStore& store, const nlohmann::json& hyper,
                      const ad::Adam* optimizer) {
  nlohmann::json h;
  h["format"] = "lgv-checkpoint";
  h["version"] = 1;
  h["hyper"] = hyper;
  h["tensors"] = nlohmann::json::array();
  for (const auto& t : store) h["tensors"].push_back({{"name", t.name}, {"shape", {t.value.rows(), t.value.cols()}}});
  if (optimizer) h["optimizer"] = {{"kind", "adam"}, {"steps", optimizer->steps()}};
  const std::string text = h.dump();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& t : store) write_floats(out, t.value);
    if (optimizer) {
      for (const auto& m : optimizer->first_moments()) write_floats(out, m);
      for (const auto& v : optimizer->second_moments()) write_floats(out, v);
    }
    if (!out) throw std::runtime_error("failed writing checkpoint '" + path + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw std::runtime_error("cannot move checkpoint into place");
}

nlohmann::json read_checkpoint_header(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return read_header(in, path);
}

nlohmann::json read_checkpoint(const std::string& path, ad::ParamStore& store, ad::Adam* optimizer) {
  std::ifstream in(path, std::ios::binary);
  const nlohmann::json h = read_header(in, path);
  const auto& tensors = h["tensors"];
  if (static_cast<int>(tensors.size()) != store.size()) {
    throw FormatError("checkpoint '" + path + "' holds " + std::to_string(tensors.size()) + " tensors, model has " +
                      std::to_string(store.size()));
  }
  for (int i = 0; i < store.size(); ++i) {
    const auto& t = tensors[static_cast<std::size_t>(i)];
    const auto& mine = store[i];
    if (t.at("name").get<std::string>() != mine.name || t.at("shape")[0].get<Index>() != mine.value.rows() ||
        t.at("shape")[1].get<Index>() != mine.value.cols()) {
      throw FormatError("checkpoint tensor '" + t.at("name").get<std::string>() + "' does not match model tensor '" +
                        mine.name + "'");
    }
  }
  for (int i = 0; i < store.size(); ++i) read_floats(in, store.value(i), path);
  if (optimizer && h.contains("optimizer")) {
    auto& ms = optimizer->first_moments();
    auto& vs = optimizer->second_moments();
    if (static_cast<int>(ms.size()) != store.size()) throw std::logic_error("optimizer was built for another store");
    for (auto& m : ms) read_floats(in, m, path);
    for (auto& v : vs) read_floats(in, v, path);
    optimizer->set_steps(h["optimizer"].at("steps").get<std::int64_t>());
  }
  return h.value("hyper", nlohmann::json::object());
}

}  // namespace lgv
