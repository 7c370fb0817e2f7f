#include "lgv/dataset.hpp"

#include "lgv/dynamics_core.hpp"
#include "lgv/errors.hpp"
#include "lgv/integrators.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numbers>
#include <thread>

namespace lgv {

namespace fs = std::filesystem;
using std::numbers::pi;

static_assert(std::endian::native == std::endian::little, "dataset I/O assumes a little-endian host");

// ---------------------------------------------------------------------------
// Rendering

RenderParams default_render_params(SystemKind kind) {
  switch (kind) {
    case SystemKind::Pendulum:
      return {0.7, 0.08, 0.08, 1.0};
    case SystemKind::CartPole:
      // The pole is drawn at twice its pivot-to-centre length.
      return {0.4, 0.06, 0.08, 2.0};
    case SystemKind::Acrobot:
      return {0.45, 0.07, 0.08, 1.0};
  }
  throw ConfigError("unknown system kind");
}

namespace {

struct Capsule {
  Eigen::Vector2d a, b;
  double radius;
};

struct Rect {
  Eigen::Vector2d center;
  double hx, hy;
};

double segment_distance(const Eigen::Vector2d& p, const Capsule& c) {
  const Eigen::Vector2d ab = c.b - c.a;
  const double len2 = ab.squaredNorm();
  const double t = len2 > 0 ? std::clamp((p - c.a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (p - (c.a + t * ab)).norm();
}

// Coverage of a pixel centred on grid node p with sub-sample offsets.
template <typename Inside>
double coverage(const Eigen::Vector2d& p, double px, double py, int ss, const Inside& inside) {
  int hits = 0;
  for (int i = 0; i < ss; ++i) {
    const double oy = ((i + 0.5) / ss - 0.5) * py;
    for (int k = 0; k < ss; ++k) {
      const double ox = ((k + 0.5) / ss - 0.5) * px;
      if (inside(Eigen::Vector2d(p.x() + ox, p.y() + oy))) ++hits;
    }
  }
  return static_cast<double>(hits) / (ss * ss);
}

template <typename Dist>
Image raster(const RenderConfig& cfg, const Dist& signed_dist) {
  const int h = cfg.height, w = cfg.width;
  const double px = 2.0 / (w - 1), py = 2.0 / (h - 1);
  const double reach = 0.5 * std::hypot(px, py);
  Image img = Image::Zero(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const Eigen::Vector2d p(-1.0 + c * px, 1.0 - r * py);
      const double d = signed_dist(p);
      if (d > reach) continue;
      if (d < -reach) {
        img(r, c) = 1.0;
        continue;
      }
      img(r, c) = coverage(p, px, py, cfg.supersample, [&](const Eigen::Vector2d& s) { return signed_dist(s) <= 0.0; });
    }
  }
  return img;
}

Image draw(const RenderConfig& cfg, const Capsule& cap) {
  return raster(cfg, [&](const Eigen::Vector2d& p) { return segment_distance(p, cap) - cap.radius; });
}

Image draw(const RenderConfig& cfg, const Rect& rect) {
  return raster(cfg, [&](const Eigen::Vector2d& p) {
    // Chebyshev-style bound: <= 0 exactly inside the rectangle.
    return std::max(std::abs(p.x() - rect.center.x()) - rect.hx, std::abs(p.y() - rect.center.y()) - rect.hy);
  });
}

Eigen::Vector2d dir(double phi) { return {std::sin(phi), std::cos(phi)}; }

struct Primitives {
  std::vector<Capsule> capsules;  // per body, unless the body is a rect
  std::vector<int> kind;          // 0 capsule, 1 rect
  std::vector<Rect> rects;
};

Primitives primitives(const SystemSpec& spec, const Eigen::VectorXd& q, const RenderParams& p) {
  if (q.size() != spec.dof()) throw std::invalid_argument("render: q must have dof entries");
  const double s = p.world_scale;
  const auto& len = spec.phys.lengths;
  Primitives out;
  switch (spec.kind) {
    case SystemKind::Pendulum:
      out.capsules.push_back({{0, 0}, s * len.at(0) * dir(q(0)), p.half_width});
      out.kind = {0};
      break;
    case SystemKind::CartPole: {
      const Eigen::Vector2d cart(s * q(0), 0.0);
      out.rects.push_back({cart, 0.5 * s * len.at(0), p.cart_half_height});
      out.capsules.push_back({cart, cart + s * p.pole_draw_factor * len.at(1) * dir(q(1)), p.half_width});
      out.kind = {1, 0};
      break;
    }
    case SystemKind::Acrobot: {
      const Eigen::Vector2d elbow = s * len.at(0) * dir(q(0));
      out.capsules.push_back({{0, 0}, elbow, p.half_width});
      out.capsules.push_back({elbow, elbow + s * len.at(1) * dir(q(1)), p.half_width});
      out.kind = {0, 0};
      break;
    }
  }
  return out;
}

}  // namespace

std::vector<Image> render(const SystemSpec& spec, const Eigen::VectorXd& q, const RenderConfig& config) {
  if (config.height < 2 || config.width < 2 || config.supersample < 1) throw ConfigError("render: bad image size");
  const Primitives prim = primitives(spec, q, config.params);
  std::vector<Image> out;
  std::size_t ci = 0, ri = 0;
  for (int k : prim.kind) out.push_back(k == 0 ? draw(config, prim.capsules[ci++]) : draw(config, prim.rects[ri++]));
  return out;
}

std::vector<Eigen::Vector2d> body_centers(const SystemSpec& spec, const Eigen::VectorXd& q, const RenderParams& params) {
  const Primitives prim = primitives(spec, q, params);
  std::vector<Eigen::Vector2d> out;
  std::size_t ci = 0, ri = 0;
  for (int k : prim.kind) {
    if (k == 0) {
      const auto& c = prim.capsules[ci++];
      out.push_back(0.5 * (c.a + c.b));
    } else {
      out.push_back(prim.rects[ri++].center);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifest

nlohmann::json to_json(const DatasetManifest& m) {
  const auto& c = m.config;
  return {{"version", m.version},
          {"system", m.spec.name},
          {"spec", to_json(m.spec)},
          {"el_form", to_string(m.spec.el_form)},
          {"n_ic", c.n_ic},
          {"control_values", c.control_values},
          {"steps", c.steps},
          {"dt", c.dt},
          {"substeps", c.substeps},
          {"height", c.height},
          {"width", c.width},
          {"supersample", c.supersample},
          {"seed", c.seed},
          {"position_range", c.position_range},
          {"velocity_range", c.velocity_range},
          {"store_gt", c.store_gt},
          {"n_bodies", m.spec.n_bodies},
          {"control_dim", m.spec.control_dim()},
          {"n_records", m.n_records},
          {"render",
           {{"world_scale", m.render.world_scale},
            {"half_width", m.render.half_width},
            {"cart_half_height", m.render.cart_half_height},
            {"pole_draw_factor", m.render.pole_draw_factor}}},
          {"ic_distribution", m.ic_distribution}};
}

DatasetManifest manifest_from_json(const nlohmann::json& doc) {
  try {
    DatasetManifest m;
    m.version = doc.at("version").get<int>();
    if (m.version != 1) throw FormatError("unsupported dataset version " + std::to_string(m.version));
    m.spec = system_spec_from_json(doc.at("spec"));
    auto& c = m.config;
    c.n_ic = doc.at("n_ic").get<int>();
    c.control_values = doc.at("control_values").get<std::vector<double>>();
    c.steps = doc.at("steps").get<int>();
    c.dt = doc.at("dt").get<double>();
    c.substeps = doc.at("substeps").get<int>();
    c.height = doc.at("height").get<int>();
    c.width = doc.at("width").get<int>();
    c.supersample = doc.at("supersample").get<int>();
    c.seed = doc.at("seed").get<std::uint64_t>();
    c.position_range = doc.at("position_range").get<double>();
    c.velocity_range = doc.at("velocity_range").get<double>();
    c.store_gt = doc.at("store_gt").get<bool>();
    const auto& r = doc.at("render");
    m.render = {r.at("world_scale").get<double>(), r.at("half_width").get<double>(),
                r.at("cart_half_height").get<double>(), r.at("pole_draw_factor").get<double>()};
    m.n_records = doc.at("n_records").get<int>();
    m.ic_distribution = doc.value("ic_distribution", std::string());
    if (doc.at("n_bodies").get<int>() != m.spec.n_bodies || doc.at("control_dim").get<int>() != m.spec.control_dim()) {
      throw FormatError("dataset manifest shape fields disagree with its system spec");
    }
    if (m.n_records != record_count(m.spec, c)) throw FormatError("dataset manifest record count disagrees with its grid");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("dataset manifest: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("dataset manifest: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Generation

const float* Dataset::frame(int record, int time, int body) const {
  const std::size_t idx = ((static_cast<std::size_t>(record) * frames() + time) * bodies() + body) * pixels();
  return images.data() + idx;
}

Eigen::VectorXd Dataset::control(int record) const {
  Eigen::VectorXd u(control_dim());
  for (int k = 0; k < control_dim(); ++k) u(k) = controls[static_cast<std::size_t>(record) * control_dim() + k];
  return u;
}

Eigen::VectorXd Dataset::gt_state(int record, int time) const {
  if (gt_states.empty()) throw std::logic_error("dataset carries no ground-truth states");
  const int width = 2 * manifest.spec.dof();
  Eigen::VectorXd x(width);
  const std::size_t base = (static_cast<std::size_t>(record) * frames() + time) * width;
  for (int k = 0; k < width; ++k) x(k) = gt_states[base + k];
  return x;
}

namespace {

std::vector<Eigen::VectorXd> control_grid(const SystemSpec& spec, const std::vector<double>& values) {
  std::vector<Eigen::VectorXd> grid;
  const int ud = spec.control_dim();
  const bool has_zero = std::find(values.begin(), values.end(), 0.0) != values.end();
  if (has_zero || ud == 0) grid.push_back(Eigen::VectorXd::Zero(ud));
  for (int d = 0; d < ud; ++d) {
    for (double v : values) {
      if (v == 0.0) continue;
      Eigen::VectorXd u = Eigen::VectorXd::Zero(ud);
      u(d) = v;
      grid.push_back(u);
    }
  }
  return grid;
}

void check_config(const DatasetConfig& c) {
  if (c.n_ic < 1) throw ConfigError("dataset: n_ic must be positive");
  if (c.steps < 1) throw ConfigError("dataset: steps must be positive");
  if (!(c.dt > 0.0)) throw ConfigError("dataset: dt must be positive");
  if (c.substeps < 1) throw ConfigError("dataset: substeps must be positive");
  if (c.height < 2 || c.width < 2) throw ConfigError("dataset: image size must be at least 2x2");
  if (c.control_values.empty()) throw ConfigError("dataset: control grid is empty");
}

}  // namespace

int record_count(const SystemSpec& spec, const DatasetConfig& config) {
  return config.n_ic * static_cast<int>(control_grid(spec, config.control_values).size());
}

Dataset generate_dataset(const SystemSpec& spec, const DatasetConfig& config) {
  spec.validate();
  check_config(config);
  const auto grid = control_grid(spec, config.control_values);
  const int m = spec.dof();
  const int mr = spec.translational_count();

  Dataset data;
  data.manifest.spec = spec;
  data.manifest.config = config;
  data.manifest.render = default_render_params(spec.kind);
  data.manifest.n_records = config.n_ic * static_cast<int>(grid.size());
  data.manifest.ic_distribution =
      "angles uniform on [-pi, pi); positions uniform on [-position_range, position_range]; velocities uniform on "
      "[-velocity_range, velocity_range]";

  // Initial conditions are drawn up front so that the result does not depend
  // on the worker count.
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> angle(-pi, pi), unit(-1.0, 1.0);
  std::vector<Eigen::VectorXd> ics;
  for (int i = 0; i < config.n_ic; ++i) {
    Eigen::VectorXd x(2 * m);
    for (int j = 0; j < m; ++j) x(j) = j < mr ? config.position_range * unit(rng) : angle(rng);
    for (int j = 0; j < m; ++j) x(m + j) = config.velocity_range * unit(rng);
    ics.push_back(x);
  }

  const int frames = config.steps + 1, bodies = spec.n_bodies, hw = config.height * config.width;
  const int ud = spec.control_dim();
  data.images.assign(static_cast<std::size_t>(data.manifest.n_records) * frames * bodies * hw, 0.0f);
  data.controls.assign(static_cast<std::size_t>(data.manifest.n_records) * ud, 0.0f);
  if (config.store_gt) data.gt_states.assign(static_cast<std::size_t>(data.manifest.n_records) * frames * 2 * m, 0.0f);

  RenderConfig rc{config.height, config.width, config.supersample, data.manifest.render};
  const int per_ic = static_cast<int>(grid.size());
  auto field = [&spec](const Eigen::VectorXd& x, const Eigen::VectorXd& u) { return gt_rhs_q(spec, x, u); };
  parallel_for(data.manifest.n_records, [&](int rec) {
    const Eigen::VectorXd& u = grid[static_cast<std::size_t>(rec % per_ic)];
    const auto fine = rollout(field, ics[static_cast<std::size_t>(rec / per_ic)], u, config.dt / config.substeps,
                              config.steps * config.substeps, Solver::Rk4);
    for (int k = 0; k < ud; ++k) data.controls[static_cast<std::size_t>(rec) * ud + k] = static_cast<float>(u(k));
    for (int t = 0; t < frames; ++t) {
      const Eigen::VectorXd& x = fine.states[static_cast<std::size_t>(t) * config.substeps];
      const auto imgs = render(spec, x.head(m), rc);
      for (int b = 0; b < bodies; ++b) {
        float* dst = data.images.data() + ((static_cast<std::size_t>(rec) * frames + t) * bodies + b) * hw;
        for (int p = 0; p < hw; ++p) dst[p] = static_cast<float>(imgs[static_cast<std::size_t>(b)].data()[p]);
      }
      if (config.store_gt) {
        float* dst = data.gt_states.data() + (static_cast<std::size_t>(rec) * frames + t) * 2 * m;
        for (int k = 0; k < 2 * m; ++k) dst[k] = static_cast<float>(x(k));
      }
    }
  });
  return data;
}

// ---------------------------------------------------------------------------
// Windows and batches

WindowSet reorganize(const Dataset& data, int t_pred) {
  std::vector<int> all(static_cast<std::size_t>(data.records()));
  for (int i = 0; i < data.records(); ++i) all[static_cast<std::size_t>(i)] = i;
  return reorganize(data, t_pred, all);
}

WindowSet reorganize(const Dataset& data, int t_pred, const std::vector<int>& records) {
  const int T = data.manifest.config.steps;
  if (t_pred < 1 || t_pred >= T) throw ConfigError("reorganize: need 1 <= T_pred < T");
  WindowSet ws;
  ws.t_pred = t_pred;
  for (int rec : records) {
    const Eigen::VectorXd u = data.control(rec);
    int group = -1;
    for (std::size_t g = 0; g < ws.group_controls.size(); ++g) {
      if (ws.group_controls[g] == u) group = static_cast<int>(g);
    }
    if (group < 0) {
      group = static_cast<int>(ws.group_controls.size());
      ws.group_controls.push_back(u);
      ws.groups.emplace_back();
      if (u.size() == 0 || u.isZero(0.0)) ws.zero_group = group;
    }
    for (int start = 0; start < T - t_pred; ++start) {
      ws.groups[static_cast<std::size_t>(group)].push_back(static_cast<int>(ws.windows.size()));
      ws.windows.push_back({rec, start});
    }
  }
  return ws;
}

std::string to_string(BatchMode m) { return m == BatchMode::Standard ? "standard" : "homogeneous"; }

BatchMode batch_mode_from_string(const std::string& name) {
  if (name == "standard") return BatchMode::Standard;
  if (name == "homogeneous") return BatchMode::Homogeneous;
  throw ConfigError("unknown batching mode '" + name + "' (expected standard or homogeneous)");
}

TrajectoryBatch make_batch(const Dataset& data, const std::vector<Window>& windows, int t_pred) {
  const int B = static_cast<int>(windows.size());
  const int hw = data.pixels();
  TrajectoryBatch batch;
  batch.size = B;
  batch.t_pred = t_pred;
  batch.source = windows;
  batch.frames.assign(static_cast<std::size_t>(t_pred) + 1,
                      std::vector<ad::Matrix>(static_cast<std::size_t>(data.bodies()), ad::Matrix(B, hw)));
  batch.controls.resize(B, data.control_dim());
  for (int b = 0; b < B; ++b) {
    const Window& w = windows[static_cast<std::size_t>(b)];
    if (w.start + t_pred >= data.frames()) throw std::out_of_range("make_batch: window exceeds record");
    for (int tau = 0; tau <= t_pred; ++tau) {
      for (int body = 0; body < data.bodies(); ++body) {
        const float* src = data.frame(w.record, w.start + tau, body);
        auto row = batch.frames[static_cast<std::size_t>(tau)][static_cast<std::size_t>(body)].row(b);
        for (int p = 0; p < hw; ++p) row(p) = src[p];
      }
    }
    batch.controls.row(b) = data.control(w.record).transpose();
  }
  return batch;
}

TrajectoryBatch sample_batch(const Dataset& data, const WindowSet& ws, int size, BatchMode mode, std::mt19937_64& rng,
                             double zero_weight) {
  if (ws.windows.empty()) throw std::invalid_argument("sample_batch: no windows");
  if (size < 1) throw std::invalid_argument("sample_batch: size must be positive");
  std::vector<Window> picked;
  picked.reserve(static_cast<std::size_t>(size));
  if (mode == BatchMode::Standard) {
    std::uniform_int_distribution<std::size_t> pick(0, ws.windows.size() - 1);
    for (int i = 0; i < size; ++i) picked.push_back(ws.windows[pick(rng)]);
  } else {
    const int n_groups = static_cast<int>(ws.groups.size());
    int group = 0;
    const int others = n_groups - (ws.zero_group >= 0 ? 1 : 0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double coin = unit(rng);
    if (ws.zero_group >= 0 && (others == 0 || coin < zero_weight)) {
      group = ws.zero_group;
    } else {
      std::uniform_int_distribution<int> pick(0, others - 1);
      group = pick(rng);
      if (ws.zero_group >= 0 && group >= ws.zero_group) ++group;
    }
    const auto& members = ws.groups[static_cast<std::size_t>(group)];
    std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
    for (int i = 0; i < size; ++i) picked.push_back(ws.windows[static_cast<std::size_t>(members[pick(rng)])]);
  }
  return make_batch(data, picked, ws.t_pred);
}

// ---------------------------------------------------------------------------
// Files

namespace {

void write_floats(const fs::path& path, const std::vector<float>& v) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

std::vector<float> read_floats(const fs::path& path, std::size_t expected) {
  std::error_code ec;
  const auto bytes = fs::file_size(path, ec);
  if (ec) throw FormatError("cannot read '" + path.string() + "': " + ec.message());
  const std::size_t want = expected * sizeof(float);
  if (bytes != want) {
    throw FormatError("'" + path.string() + "' holds " + std::to_string(bytes) + " bytes, expected " +
                      std::to_string(want));
  }
  std::vector<float> v(expected);
  std::ifstream in(path, std::ios::binary);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(want));
  if (!in) throw FormatError("failed reading '" + path.string() + "'");
  return v;
}

}  // namespace

void write_dataset(const std::string& dir, const Dataset& data) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create dataset directory '" + dir + "': " + ec.message());
  const fs::path root(dir);
  {
    std::ofstream out(root / "manifest.json", std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + (root / "manifest.json").string() + "'");
    out << to_json(data.manifest).dump(2) << "\n";
  }
  write_floats(root / "images.f32", data.images);
  write_floats(root / "controls.f32", data.controls);
  if (!data.gt_states.empty()) {
    write_floats(root / "gt_states.f32", data.gt_states);
  } else {
    fs::remove(root / "gt_states.f32", ec);
  }
}

DatasetManifest read_manifest(const std::string& dir) {
  const fs::path path = fs::path(dir) / "manifest.json";
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("'" + path.string() + "': " + e.what());
  }
  return manifest_from_json(doc);
}

Dataset read_dataset(const std::string& dir) {
  Dataset data;
  data.manifest = read_manifest(dir);
  const fs::path root(dir);
  const std::size_t n = static_cast<std::size_t>(data.records());
  data.images = read_floats(root / "images.f32", n * data.frames() * data.bodies() * data.pixels());
  data.controls = read_floats(root / "controls.f32", n * data.control_dim());
  if (fs::exists(root / "gt_states.f32")) {
    data.gt_states = read_floats(root / "gt_states.f32", n * data.frames() * 2 * data.manifest.spec.dof());
  }
  return data;
}

// ---------------------------------------------------------------------------
// Workers

int worker_count() {
  int n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("LGV_NUM_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) n = std::min(n, cap);
  }
  return n;
}

void parallel_for(int n, const std::function<void(int)>& fn) {
  const int workers = std::min(worker_count(), n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace lgv
