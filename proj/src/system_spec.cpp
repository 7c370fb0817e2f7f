#include "lgv/system_spec.hpp"

#include "lgv/errors.hpp"

#include <algorithm>
#include <cmath>

namespace lgv {

using nlohmann::json;

std::vector<int> FrameRule::dependencies() const {
  std::vector<int> deps;
  auto note = [&](int c) {
    if (c >= 0 && std::find(deps.begin(), deps.end(), c) == deps.end()) deps.push_back(c);
  };
  for (const auto& t : x) note(t.coord);
  for (const auto& t : y) note(t.coord);
  note(rotation_coord);
  std::sort(deps.begin(), deps.end());
  return deps;
}

int SystemSpec::translational_count() const {
  return static_cast<int>(std::count_if(coordinates.begin(), coordinates.end(),
                                        [](const Coordinate& c) { return c.kind == CoordKind::Translational; }));
}

int SystemSpec::rotational_count() const { return dof() - translational_count(); }

void SystemSpec::validate() const {
  if (n_bodies < 1) throw ConfigError("system needs at least one body");
  if (dof() != 3 * n_bodies - constraints) {
    throw ConfigError("dof " + std::to_string(dof()) + " != 3*n_bodies - constraints");
  }
  bool seen_rotational = false;
  for (const auto& c : coordinates) {
    if (c.kind == CoordKind::Rotational) seen_rotational = true;
    if (c.kind == CoordKind::Translational && seen_rotational) {
      throw ConfigError("translational coordinates must precede rotational ones");
    }
    if (c.body < 0 || c.body >= n_bodies) throw ConfigError("coordinate " + c.name + " names a missing body");
  }
  if (static_cast<int>(phys.masses.size()) != n_bodies || static_cast<int>(phys.lengths.size()) != n_bodies) {
    throw ConfigError("phys masses/lengths must have one entry per body");
  }
  for (double v : phys.masses) {
    if (!(v > 0.0)) throw ConfigError("masses must be strictly positive");
  }
  for (double v : phys.lengths) {
    if (!(v > 0.0)) throw ConfigError("lengths must be strictly positive");
  }
  if (!(phys.gravity > 0.0)) throw ConfigError("gravity must be strictly positive");
  if (actuation.rows() != dof()) throw ConfigError("actuation must have dof rows");
  if (static_cast<int>(encoder_frames.size()) != dof()) throw ConfigError("one encoder frame per coordinate");
  if (static_cast<int>(decoder_frames.size()) != n_bodies) throw ConfigError("one decoder frame per body");
  auto check_rule = [&](const FrameRule& r) {
    for (const auto* terms : {&r.x, &r.y}) {
      for (const auto& t : *terms) {
        if (t.coord < 0 || t.coord >= dof()) throw ConfigError("frame term names a missing coordinate");
        if (t.length >= static_cast<int>(length_init.size())) throw ConfigError("frame term names a missing length");
        const bool rot = coordinates[static_cast<std::size_t>(t.coord)].kind == CoordKind::Rotational;
        if (rot == (t.fn == FrameFn::Identity)) throw ConfigError("frame term fn does not match coordinate kind");
      }
    }
    if (r.rotation_coord >= dof()) throw ConfigError("frame rotation names a missing coordinate");
    if (r.rotation_coord >= 0 &&
        coordinates[static_cast<std::size_t>(r.rotation_coord)].kind != CoordKind::Rotational) {
      throw ConfigError("frame rotation must use a rotational coordinate");
    }
  };
  for (std::size_t j = 0; j < encoder_frames.size(); ++j) {
    check_rule(encoder_frames[j]);
    const auto deps = encoder_frames[j].dependencies();
    if (std::find(deps.begin(), deps.end(), static_cast<int>(j)) != deps.end()) {
      throw ConfigError("encoder frame of a coordinate may not depend on itself");
    }
  }
  for (const auto& r : decoder_frames) check_rule(r);
  encoding_order(*this);
}

std::vector<int> encoding_order(const SystemSpec& spec) {
  const int m = spec.dof();
  std::vector<int> order;
  std::vector<char> done(static_cast<std::size_t>(m), 0);
  while (static_cast<int>(order.size()) < m) {
    bool progressed = false;
    for (int j = 0; j < m; ++j) {
      if (done[static_cast<std::size_t>(j)]) continue;
      const auto deps = spec.encoder_frames[static_cast<std::size_t>(j)].dependencies();
      if (std::all_of(deps.begin(), deps.end(), [&](int d) { return done[static_cast<std::size_t>(d)] != 0; })) {
        order.push_back(j);
        done[static_cast<std::size_t>(j)] = 1;
        progressed = true;
      }
    }
    if (!progressed) throw ConfigError("encoder frame dependencies contain a cycle");
  }
  return order;
}

SystemSpec make_system(SystemKind kind) {
  SystemSpec s;
  s.kind = kind;
  s.name = to_string(kind);
  switch (kind) {
    case SystemKind::Pendulum:
      s.n_bodies = 1;
      s.constraints = 2;
      s.coordinates = {{"phi", CoordKind::Rotational, 0}};
      s.phys = {{1.0}, {1.0}, 10.0};
      s.encoder_frames = {FrameRule{}};
      s.decoder_frames = {FrameRule{{}, {}, 0}};
      break;
    case SystemKind::CartPole:
      s.n_bodies = 2;
      s.constraints = 4;
      s.coordinates = {{"r", CoordKind::Translational, 0}, {"phi", CoordKind::Rotational, 1}};
      // Cart "length" is its drawn width; only the pole length enters the dynamics.
      s.phys = {{1.0, 0.1}, {0.8, 0.5}, 9.8};
      s.encoder_frames = {FrameRule{}, FrameRule{{{0, FrameFn::Identity}}, {}, -1}};
      s.decoder_frames = {FrameRule{{{0, FrameFn::Identity}}, {}, -1}, FrameRule{{{0, FrameFn::Identity}}, {}, 1}};
      break;
    case SystemKind::Acrobot:
      s.n_bodies = 2;
      s.constraints = 4;
      s.coordinates = {{"phi1", CoordKind::Rotational, 0}, {"phi2", CoordKind::Rotational, 1}};
      s.phys = {{1.0, 1.0}, {1.0, 1.0}, 9.8};
      s.length_init = {0.5};
      s.encoder_frames = {FrameRule{}, FrameRule{{{0, FrameFn::Sin, 0}}, {{0, FrameFn::Cos, 0}}, -1}};
      s.decoder_frames = {FrameRule{{}, {}, 0}, FrameRule{{{0, FrameFn::Sin, 0}}, {{0, FrameFn::Cos, 0}}, 1}};
      break;
  }
  s.actuation = Eigen::MatrixXd::Identity(s.dof(), s.dof());
  s.validate();
  return s;
}

SystemSpec make_system(const std::string& name) { return make_system(system_kind_from_string(name)); }

std::string to_string(SystemKind kind) {
  switch (kind) {
    case SystemKind::Pendulum:
      return "pendulum";
    case SystemKind::CartPole:
      return "cartpole";
    case SystemKind::Acrobot:
      return "acrobot";
  }
  return "?";
}

SystemKind system_kind_from_string(const std::string& name) {
  if (name == "pendulum") return SystemKind::Pendulum;
  if (name == "cartpole") return SystemKind::CartPole;
  if (name == "acrobot") return SystemKind::Acrobot;
  throw ConfigError("unknown system '" + name + "' (expected pendulum, cartpole or acrobot)");
}

std::string to_string(ElForm form) { return form == ElForm::Full ? "full" : "eq3"; }

ElForm el_form_from_string(const std::string& name) {
  if (name == "full") return ElForm::Full;
  if (name == "eq3") return ElForm::Eq3;
  throw ConfigError("unknown el_form '" + name + "' (expected full or eq3)");
}

namespace {

const char* fn_name(FrameFn fn) {
  switch (fn) {
    case FrameFn::Identity:
      return "identity";
    case FrameFn::Sin:
      return "sin";
    case FrameFn::Cos:
      return "cos";
  }
  return "?";
}

FrameFn fn_from(const std::string& s) {
  if (s == "identity") return FrameFn::Identity;
  if (s == "sin") return FrameFn::Sin;
  if (s == "cos") return FrameFn::Cos;
  throw ConfigError("unknown frame fn '" + s + "'");
}

json terms_json(const std::vector<FrameTerm>& terms) {
  json a = json::array();
  for (const auto& t : terms) {
    a.push_back({{"coord", t.coord}, {"fn", fn_name(t.fn)}, {"length", t.length}, {"coefficient", t.coefficient}});
  }
  return a;
}

std::vector<FrameTerm> terms_from(const json& a) {
  std::vector<FrameTerm> out;
  for (const auto& e : a) {
    out.push_back({e.at("coord").get<int>(), fn_from(e.at("fn").get<std::string>()), e.value("length", -1),
                   e.value("coefficient", 1.0)});
  }
  return out;
}

json rule_json(const FrameRule& r) {
  return {{"x", terms_json(r.x)}, {"y", terms_json(r.y)}, {"rotation", r.rotation_coord}};
}

FrameRule rule_from(const json& j) {
  return {terms_from(j.at("x")), terms_from(j.at("y")), j.value("rotation", -1)};
}

}  // namespace

json to_json(const SystemSpec& spec) {
  json coords = json::array();
  for (const auto& c : spec.coordinates) {
    coords.push_back({{"name", c.name},
                      {"kind", c.kind == CoordKind::Translational ? "translational" : "rotational"},
                      {"body", c.body}});
  }
  json act = json::array();
  for (Eigen::Index i = 0; i < spec.actuation.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < spec.actuation.cols(); ++j) row.push_back(spec.actuation(i, j));
    act.push_back(row);
  }
  json enc = json::array();
  for (const auto& r : spec.encoder_frames) enc.push_back(rule_json(r));
  json dec = json::array();
  for (const auto& r : spec.decoder_frames) dec.push_back(rule_json(r));
  return {{"name", spec.name},
          {"kind", to_string(spec.kind)},
          {"n_bodies", spec.n_bodies},
          {"constraints", spec.constraints},
          {"coordinates", coords},
          {"phys", {{"masses", spec.phys.masses}, {"lengths", spec.phys.lengths}, {"gravity", spec.phys.gravity}}},
          {"length_init", spec.length_init},
          {"actuation", act},
          {"el_form", to_string(spec.el_form)},
          {"encoder_frames", enc},
          {"decoder_frames", dec}};
}

SystemSpec system_spec_from_json(const json& doc) {
  static const std::vector<std::string> known = {"name",     "kind",      "n_bodies",       "constraints",
                                                 "coordinates", "phys",   "length_init",    "actuation",
                                                 "el_form",  "encoder_frames", "decoder_frames"};
  for (const auto& [key, _] : doc.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError("unknown system key '" + key + "'");
    }
  }
  SystemSpec s = make_system(system_kind_from_string(doc.at("kind").get<std::string>()));
  if (doc.contains("name")) s.name = doc.at("name").get<std::string>();
  if (doc.contains("n_bodies")) s.n_bodies = doc.at("n_bodies").get<int>();
  if (doc.contains("constraints")) s.constraints = doc.at("constraints").get<int>();
  if (doc.contains("coordinates")) {
    s.coordinates.clear();
    for (const auto& c : doc.at("coordinates")) {
      const auto kind = c.at("kind").get<std::string>();
      if (kind != "translational" && kind != "rotational") throw ConfigError("unknown coordinate kind " + kind);
      s.coordinates.push_back({c.at("name").get<std::string>(),
                               kind == "translational" ? CoordKind::Translational : CoordKind::Rotational,
                               c.at("body").get<int>()});
    }
  }
  if (doc.contains("phys")) {
    const auto& p = doc.at("phys");
    s.phys.masses = p.value("masses", s.phys.masses);
    s.phys.lengths = p.value("lengths", s.phys.lengths);
    s.phys.gravity = p.value("gravity", s.phys.gravity);
  }
  if (doc.contains("length_init")) s.length_init = doc.at("length_init").get<std::vector<double>>();
  if (doc.contains("actuation")) {
    const auto& a = doc.at("actuation");
    const auto rows = static_cast<Eigen::Index>(a.size());
    const auto cols = rows == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(a.at(0).size());
    s.actuation.resize(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) s.actuation(i, j) = a.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(j)).get<double>();
    }
  }
  if (doc.contains("el_form")) s.el_form = el_form_from_string(doc.at("el_form").get<std::string>());
  if (doc.contains("encoder_frames")) {
    s.encoder_frames.clear();
    for (const auto& r : doc.at("encoder_frames")) s.encoder_frames.push_back(rule_from(r));
  }
  if (doc.contains("decoder_frames")) {
    s.decoder_frames.clear();
    for (const auto& r : doc.at("decoder_frames")) s.decoder_frames.push_back(rule_from(r));
  }
  s.validate();
  return s;
}

}  // namespace lgv
