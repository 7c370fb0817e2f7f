// Procedural image datasets: per-body rendering of ground-truth mechanisms,
// constant-control trajectory generation, prediction windows, batching and
// the on-disk layout.
#pragma once

#include "lgv/autodiff/tape.hpp"
#include "lgv/geometry.hpp"
#include "lgv/system_spec.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace lgv {

// Drawing parameters in normalized image units. `world_scale` maps metres to
// normalized units.
struct RenderParams {
  double world_scale = 0.7;
  double half_width = 0.08;     // capsule radius of links and poles
  double cart_half_height = 0.08;
  double pole_draw_factor = 1.0;  // drawn pole length / physical length
};
RenderParams default_render_params(SystemKind kind);

struct RenderConfig {
  int height = 32;
  int width = 32;
  int supersample = 4;  // samples per pixel edge for coverage anti-aliasing
  RenderParams params;
};

// One image per body, values are pixel coverage in [0, 1].
std::vector<Image> render(const SystemSpec& spec, const Eigen::VectorXd& q, const RenderConfig& config);
// Analytic centre of each drawn body in normalized coordinates.
std::vector<Eigen::Vector2d> body_centers(const SystemSpec& spec, const Eigen::VectorXd& q, const RenderParams& params);

struct DatasetConfig {
  int n_ic = 256;
  std::vector<double> control_values{-2.0, -1.0, 0.0, 1.0, 2.0};
  int steps = 20;  // T; each record holds T + 1 frames
  double dt = 0.05;
  int substeps = 8;  // RK4 steps per frame interval
  int height = 32;
  int width = 32;
  int supersample = 4;
  std::uint64_t seed = 0;
  double position_range = 0.5;  // translational ICs uniform in [-range, range]
  double velocity_range = 1.0;  // all velocities uniform in [-range, range]
  bool store_gt = true;
};

struct DatasetManifest {
  int version = 1;
  SystemSpec spec;
  DatasetConfig config;
  RenderParams render;
  int n_records = 0;
  std::string ic_distribution;
};

nlohmann::json to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const nlohmann::json& doc);

// Records in generation order: for each initial condition, the zero control
// first and then every nonzero value on each actuator in turn.
struct Dataset {
  DatasetManifest manifest;
  std::vector<float> images;     // [record][time][body][row][col]
  std::vector<float> controls;   // [record][control]
  std::vector<float> gt_states;  // [record][time][q..., qdot...], may be empty

  int records() const { return manifest.n_records; }
  int frames() const { return manifest.config.steps + 1; }
  int bodies() const { return manifest.spec.n_bodies; }
  int pixels() const { return manifest.config.height * manifest.config.width; }
  int control_dim() const { return manifest.spec.control_dim(); }
  const float* frame(int record, int time, int body) const;
  Eigen::VectorXd control(int record) const;
  // (q, qdot) of a record at a time step.
  Eigen::VectorXd gt_state(int record, int time) const;
};

Dataset generate_dataset(const SystemSpec& spec, const DatasetConfig& config);
// Number of records generate_dataset produces.
int record_count(const SystemSpec& spec, const DatasetConfig& config);

struct Window {
  int record = 0;
  int start = 0;  // frames start .. start + T_pred
};

struct WindowSet {
  int t_pred = 0;
  std::vector<Window> windows;
  // Windows grouped by control vector; `zero_group` is the u = 0 group or -1.
  std::vector<std::vector<int>> groups;
  std::vector<Eigen::VectorXd> group_controls;
  int zero_group = -1;
};

// Windows of T_pred + 1 frames starting at 0 .. T - T_pred - 1, i.e.
// T - T_pred windows per record.
WindowSet reorganize(const Dataset& data, int t_pred);
WindowSet reorganize(const Dataset& data, int t_pred, const std::vector<int>& records);

enum class BatchMode { Standard, Homogeneous };
std::string to_string(BatchMode m);
BatchMode batch_mode_from_string(const std::string& name);

struct TrajectoryBatch {
  int size = 0;
  int t_pred = 0;
  std::vector<std::vector<ad::Matrix>> frames;  // [tau][body] -> [B x H*W]
  ad::Matrix controls;                          // [B x control_dim]
  std::vector<Window> source;
};

// Draws `size` windows with replacement. Standard: uniform over windows.
// Homogeneous: one control group per batch, the zero-control group with
// probability `zero_weight` and otherwise a uniformly chosen other group.
TrajectoryBatch sample_batch(const Dataset& data, const WindowSet& windows, int size, BatchMode mode,
                             std::mt19937_64& rng, double zero_weight = 0.5);
TrajectoryBatch make_batch(const Dataset& data, const std::vector<Window>& windows, int t_pred);

// Directory with manifest.json, images.f32, controls.f32 and (optionally)
// gt_states.f32; payloads are little-endian float32.
void write_dataset(const std::string& dir, const Dataset& data);
Dataset read_dataset(const std::string& dir);
DatasetManifest read_manifest(const std::string& dir);

// Runs fn(i) for i in [0, n) on up to LGV_NUM_THREADS workers (default: the
// hardware concurrency).
void parallel_for(int n, const std::function<void(int)>& fn);
int worker_count();

}  // namespace lgv
