// Run configuration and the subcommands of the lgv command-line tool.
#pragma once

#include "lgv/control.hpp"
#include "lgv/dataset.hpp"
#include "lgv/training.hpp"

#include <json.hpp>

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace lgv::cli {

struct ModelSection {
  std::string dynamics = "lagrangian";
  std::string vae = "cavae";
  int vae_hidden = 256;
  int canvas_hidden = 16;
  double window_scale = 1.0;
  double canvas_bias = -5.0;
  int dyn_hidden = 64;
  int dyn_layers = 3;
  bool constant_g = false;
  double mass_eps = 1e-4;
};

struct ControlSection {
  std::string mode = "oracle";
  std::string gains = "mass_scaled";  // or "diagonal"
  double kp = 10.0;
  double kd = 3.0;
  int steps = 500;
  double dt = 0.05;
  int substeps = 1;
  double saturation = 0.0;
  bool zero_order_hold = true;
  double tolerance = 0.05;  // goal distance that counts as converged
  int strip_stride = 10;
  std::vector<double> start;  // empty: rotational coordinates at pi, the rest 0
  std::vector<double> goal;   // empty: all zero (upright)
};

struct PredictSection {
  int horizon = 48;
  int record = 0;
};

struct EvalSection {
  int records = 0;  // evenly spaced records per split, 0 = all
};

// Seeds derive from `seed`: training data and model init use it directly,
// held-out data uses seed + 1.
struct RunConfig {
  std::string system = "pendulum";
  std::string el_form = "full";
  std::uint64_t seed = 0;
  DatasetConfig dataset;
  int val_n_ic = 32;
  ModelSection model;
  TrainConfig train;
  ControlSection control;
  PredictSection predict;
  EvalSection eval;
  std::string data_dir;      // training split; generated when empty
  std::string val_dir;       // held-out split; generated when empty
  std::vector<std::string> checkpoints;
};

nlohmann::json to_json(const RunConfig& c);
// Applies `doc` onto `c`; unknown keys raise ConfigError.
void apply_json(RunConfig& c, const nlohmann::json& doc);
RunConfig load_run_config(const std::string& path);

SystemSpec system_of(const RunConfig& c);
ModelConfig model_config_of(const RunConfig& c);
Dataset training_data(const RunConfig& c);
Dataset held_out_data(const RunConfig& c);

// Every command writes config.json (the effective configuration) to `out`.
int cmd_gen_data(const RunConfig& c, const std::string& out, std::ostream& log);
int cmd_train(const RunConfig& c, const std::string& out, const std::string& resume, std::ostream& log);
int cmd_predict(const RunConfig& c, const std::string& out, std::ostream& log);
int cmd_control(const RunConfig& c, const std::string& out, std::ostream& log);
int cmd_eval(const RunConfig& c, const std::string& out, std::ostream& log);

// Variant label: dynamics family + observation model, e.g. "Lagrangian+caVAE".
std::string variant_name(const ModelConfig& m);
// FNV-1a over the bytes of the files in `dir`, visited in name order.
std::uint64_t directory_hash(const std::string& dir);

}  // namespace lgv::cli
