// Model bundle (observation model + latent dynamics in one parameter store),
// the variational objective, the optimisation loop and pixel-error metrics.
#pragma once

#include "lgv/autodiff/adam.hpp"
#include "lgv/cavae.hpp"
#include "lgv/dataset.hpp"
#include "lgv/integrators.hpp"
#include "lgv/latent_dynamics.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace lgv {

enum class DynamicsKind { Lagrangian, Mlp };
std::string to_string(DynamicsKind k);
DynamicsKind dynamics_kind_from_string(const std::string& name);

struct ModelConfig {
  SystemSpec spec;
  DynamicsKind dynamics = DynamicsKind::Lagrangian;
  VaeKind vae = VaeKind::CoordinateAware;
  VaeConfig vae_config;
  DynamicsConfig dynamics_config;
  double dt = 0.05;
  std::uint64_t init_seed = 0;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& doc);

class Model {
 public:
  // Parameters are initialised from `init_seed` and rounded to float32.
  explicit Model(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  const SystemSpec& spec() const { return config_.spec; }
  ad::ParamStore& params() { return store_; }
  const ad::ParamStore& params() const { return store_; }
  const ObservationModel& vae() const { return *vae_; }
  const LatentDynamics& dynamics() const { return *dynamics_; }
  // Null for the MLP ablation.
  const LagrangianDynamics* lagrangian() const;

 private:
  ModelConfig config_;
  ad::ParamStore store_;
  std::unique_ptr<ObservationModel> vae_;
  std::unique_ptr<LatentDynamics> dynamics_;
};

// Checkpoint whose header carries the model configuration plus `extra`.
void save_model(const std::string& path, const Model& model, const ad::Adam* optimizer = nullptr,
                const nlohmann::json& extra = nlohmann::json::object());
std::unique_ptr<Model> load_model(const std::string& path, ad::Adam* optimizer = nullptr,
                                  nlohmann::json* extra = nullptr);

// lambda = min(rate * epoch, cap).
double anneal_lambda(int epoch, double rate = 1.0 / 8000.0, double cap = 0.375);

struct LossBreakdown {
  double vae_nll = 0.0;  // 1/2 ||x^0 - xhat^0||^2
  double kl = 0.0;       // KL of the frame-0 posterior to its prior
  double pred = 0.0;     // sum over tau = 1..T_pred of ||x^tau - xhat^tau||^2
  double vm_reg = 0.0;   // lambda * sum of (alpha, beta) norms
  double total = 0.0;
};

struct LossGraph {
  LossBreakdown parts;
  ad::Var total;
};

// Terms are summed over pixels, bodies and coordinates and averaged over
// the batch. The rollout uses `solver` (Euler during training).
LossGraph build_loss(ad::Tape& tape, const Model& model, const TrajectoryBatch& batch, double lambda,
                     std::mt19937_64& rng, Solver solver = Solver::Euler);
// Zeroes the parameter gradients, evaluates the objective and backpropagates
// into them.
LossBreakdown compute_loss(Model& model, const TrajectoryBatch& batch, double lambda, std::mt19937_64& rng,
                           Solver solver = Solver::Euler);

// Posterior-mean initial state from frames 0 and 1, rolled `horizon` steps.
struct Prediction {
  std::vector<ad::Matrix> states;                // [tau] -> [B x state_width], tau = 0..horizon
  std::vector<std::vector<ad::Matrix>> frames;   // [tau][body] -> [B x H*W]
  std::vector<ad::Matrix> energies;              // [tau] -> [B x 1]; empty for the MLP ablation
};
Prediction predict(const Model& model, const std::vector<ad::Matrix>& x0, const std::vector<ad::Matrix>& x1,
                   const ad::Matrix& controls, int horizon, Solver solver = Solver::Rk4);

struct EvalResult {
  double mse = 0.0;              // mean over predicted frames tau = 1..horizon, pixels and bodies
  std::vector<double> per_step;  // mean squared error at each tau = 0..horizon
  int sequences = 0;
  bool diverged = false;
};
// Rolls every listed record from its first two frames; `records` empty means
// all records.
EvalResult eval_pixel_mse(const Model& model, const Dataset& data, int horizon, const std::vector<int>& records = {},
                          Solver solver = Solver::Rk4, int chunk = 64);
// Same error over every prediction window of length t_pred (the windows
// reorganize produces), each rolled from its own first two frames.
EvalResult eval_window_mse(const Model& model, const Dataset& data, int t_pred, const std::vector<int>& records = {},
                           Solver solver = Solver::Rk4, int chunk = 64);

struct TrainConfig {
  int t_pred = 2;
  int epochs = 3000;  // optimizer steps
  int batch_size = 64;
  double learning_rate = 1e-3;
  Solver train_solver = Solver::Euler;
  Solver eval_solver = Solver::Rk4;
  BatchMode batching = BatchMode::Homogeneous;
  double zero_weight = 0.5;
  double anneal_rate = 1.0 / 8000.0;
  double anneal_cap = 0.375;
  int eval_every = 250;   // validation interval in epochs (0 disables)
  int eval_horizon = 0;   // rollout horizon; 0 scores the t_pred windows instead
  int eval_records = 64;  // validation records, evenly spaced
  std::uint64_t seed = 0;
  std::string out_dir;    // receives train_log.csv, best.ckpt, last.ckpt
  // Called after every epoch; returning false stops training early.
  std::function<bool(int, const LossBreakdown&)> on_epoch;
};

nlohmann::json to_json(const TrainConfig& c);
// Applies the keys of `doc` onto `c`; unknown keys raise ConfigError.
void apply_json(TrainConfig& c, const nlohmann::json& doc);

struct FitResult {
  int epochs_run = 0;
  int skipped_batches = 0;
  double best_val_mse = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  LossBreakdown last;
  bool aborted = false;  // non-finite loss
};

// Adam on the objective. `val` may be null. When `resume_from` names a
// last.ckpt written by an earlier fit, training continues from its epoch
// with identical optimizer and sampler state.
FitResult fit(Model& model, const Dataset& train, const Dataset* val, const TrainConfig& config,
              const std::string& resume_from = "");

}  // namespace lgv
