#include "lgv/training.hpp"

#include "lgv/errors.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace lgv {

using ad::Index;
using ad::Matrix;
using ad::Var;
namespace fs = std::filesystem;

std::string to_string(DynamicsKind k) { return k == DynamicsKind::Lagrangian ? "lagrangian" : "mlp"; }

DynamicsKind dynamics_kind_from_string(const std::string& name) {
  if (name == "lagrangian") return DynamicsKind::Lagrangian;
  if (name == "mlp") return DynamicsKind::Mlp;
  throw ConfigError("unknown dynamics kind '" + name + "' (expected lagrangian or mlp)");
}

// ---------------------------------------------------------------------------
// Model

nlohmann::json to_json(const ModelConfig& c) {
  const auto& v = c.vae_config;
  const auto& d = c.dynamics_config;
  return {{"spec", to_json(c.spec)},
          {"dynamics", to_string(c.dynamics)},
          {"vae", to_string(c.vae)},
          {"vae_config",
           {{"height", v.height},
            {"width", v.width},
            {"hidden", v.hidden},
            {"canvas_hidden", v.canvas_hidden},
            {"window_scale", v.window_scale},
            {"canvas_bias", v.canvas_bias}}},
          {"dynamics_config",
           {{"hidden", d.hidden},
            {"layers", d.layers},
            {"constant_g", d.constant_g},
            {"mass_eps", d.mass_eps},
            {"mlp_output_scale", d.mlp_output_scale}}},
          {"dt", c.dt},
          {"init_seed", c.init_seed}};
}

ModelConfig model_config_from_json(const nlohmann::json& doc) {
  try {
    ModelConfig c;
    c.spec = system_spec_from_json(doc.at("spec"));
    c.dynamics = dynamics_kind_from_string(doc.at("dynamics").get<std::string>());
    c.vae = vae_kind_from_string(doc.at("vae").get<std::string>());
    const auto& v = doc.at("vae_config");
    c.vae_config.height = v.at("height").get<int>();
    c.vae_config.width = v.at("width").get<int>();
    c.vae_config.hidden = v.at("hidden").get<int>();
    c.vae_config.canvas_hidden = v.at("canvas_hidden").get<int>();
    c.vae_config.window_scale = v.at("window_scale").get<double>();
    c.vae_config.canvas_bias = v.at("canvas_bias").get<double>();
    const auto& d = doc.at("dynamics_config");
    c.dynamics_config.hidden = d.at("hidden").get<int>();
    c.dynamics_config.layers = d.at("layers").get<int>();
    c.dynamics_config.constant_g = d.at("constant_g").get<bool>();
    c.dynamics_config.mass_eps = d.at("mass_eps").get<double>();
    c.dynamics_config.mlp_output_scale = d.at("mlp_output_scale").get<double>();
    c.dt = doc.at("dt").get<double>();
    c.init_seed = doc.at("init_seed").get<std::uint64_t>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model config: ") + e.what());
  }
}

Model::Model(ModelConfig config) : config_(std::move(config)) {
  config_.spec.validate();
  if (!(config_.dt > 0.0)) throw ConfigError("model dt must be positive");
  std::mt19937_64 rng(config_.init_seed);
  vae_ = make_observation_model(config_.vae, store_, config_.spec, config_.vae_config, rng);
  const StateLayout layout{config_.spec.translational_count(), config_.spec.rotational_count(),
                           config_.spec.control_dim()};
  if (config_.dynamics == DynamicsKind::Lagrangian) {
    dynamics_ = std::make_unique<LagrangianDynamics>(store_, "dyn", layout, config_.dynamics_config, rng);
  } else {
    dynamics_ = std::make_unique<MlpDynamics>(store_, "dyn", layout, config_.dynamics_config, rng);
  }
  for (auto& t : store_) ad::round_to_float32(t.value);
}

const LagrangianDynamics* Model::lagrangian() const {
  return dynamic_cast<const LagrangianDynamics*>(dynamics_.get());
}

void save_model(const std::string& path, const Model& model, const ad::Adam* optimizer, const nlohmann::json& extra) {
  nlohmann::json hyper = {{"model", to_json(model.config())}, {"extra", extra}};
  write_checkpoint(path, model.params(), hyper, optimizer);
}

std::unique_ptr<Model> load_model(const std::string& path, ad::Adam* optimizer, nlohmann::json* extra) {
  const nlohmann::json header = read_checkpoint_header(path);
  const auto& hyper = header.at("hyper");
  if (!hyper.contains("model")) throw FormatError("checkpoint '" + path + "' carries no model configuration");
  auto model = std::make_unique<Model>(model_config_from_json(hyper.at("model")));
  if (optimizer) *optimizer = ad::Adam(model->params(), optimizer->config());
  read_checkpoint(path, model->params(), optimizer);
  if (extra) *extra = hyper.value("extra", nlohmann::json::object());
  return model;
}

// ---------------------------------------------------------------------------
// Objective

double anneal_lambda(int epoch, double rate, double cap) {
  if (epoch < 0) throw std::invalid_argument("anneal_lambda: epoch must be non-negative");
  return std::min(rate * epoch, cap);
}

namespace {

std::vector<Var> constants(ad::Tape& tape, const std::vector<Matrix>& ms) {
  std::vector<Var> out;
  for (const auto& m : ms) out.push_back(tape.constant(m));
  return out;
}

// Sum over bodies and pixels of squared error, averaged over the batch.
Var squared_error(const std::vector<Var>& pred, const std::vector<Var>& target, double weight) {
  Var total;
  for (std::size_t b = 0; b < pred.size(); ++b) {
    Var e = ad::sum(ad::square(ad::sub(pred[b], target[b])));
    total = total.valid() ? ad::add(total, e) : e;
  }
  return ad::scale(total, weight / static_cast<double>(pred.front().rows()));
}

}  // namespace

LossGraph build_loss(ad::Tape& tape, const Model& model, const TrajectoryBatch& batch, double lambda,
                     std::mt19937_64& rng, Solver solver) {
  const SystemSpec& spec = model.spec();
  if (batch.t_pred < 1 || static_cast<int>(batch.frames.size()) != batch.t_pred + 1) {
    throw std::invalid_argument("build_loss: batch must hold T_pred + 1 frames");
  }
  const double inv_b = 1.0 / batch.size;
  const std::vector<Var> x0 = constants(tape, batch.frames[0]);
  const std::vector<Var> x1 = constants(tape, batch.frames[1]);
  const InitialState init = build_initial_state(tape, model.vae(), x0, x1, model.config().dt, rng, true);

  LossGraph g;
  const int w = spec.position_width();
  Var nll = squared_error(model.vae().decode(tape, ad::slice_cols(init.state, 0, w)), x0, 0.5);

  Var kl, reg;
  for (const auto& p : init.post0) {
    Var k = p.kind == CoordKind::Translational ? ad::gauss_kl(p.mean, p.log_var) : ad::vm_kl(p.kappa);
    k = ad::scale(ad::sum(k), inv_b);
    kl = kl.valid() ? ad::add(kl, k) : k;
    if (p.kind == CoordKind::Rotational) {
      Var r = ad::scale(ad::sum(p.norm), lambda * inv_b);
      reg = reg.valid() ? ad::add(reg, r) : r;
    }
  }
  if (!reg.valid()) reg = tape.constant(Matrix::Zero(1, 1));

  const Var u = tape.constant(batch.controls);
  auto field = [&](const Var& s, const Var& uu) { return model.dynamics().rhs(tape, s, uu); };
  Var s = init.state;
  Var pred;
  for (int tau = 1; tau <= batch.t_pred; ++tau) {
    s = step(solver, field, s, u, model.config().dt, static_cast<std::size_t>(tau));
    Var e = squared_error(model.vae().decode(tape, ad::slice_cols(s, 0, w)),
                          constants(tape, batch.frames[static_cast<std::size_t>(tau)]), 1.0);
    pred = pred.valid() ? ad::add(pred, e) : e;
  }

  g.total = ad::add(ad::add(nll, kl), ad::add(pred, reg));
  g.parts = {nll.scalar(), kl.scalar(), pred.scalar(), reg.scalar(), g.total.scalar()};
  return g;
}

LossBreakdown compute_loss(Model& model, const TrajectoryBatch& batch, double lambda, std::mt19937_64& rng,
                           Solver solver) {
  model.params().zero_grad();
  ad::Tape tape;
  LossGraph g = build_loss(tape, model, batch, lambda, rng, solver);
  tape.backward(g.total);
  return g.parts;
}

// ---------------------------------------------------------------------------
// Prediction and evaluation

Prediction predict(const Model& model, const std::vector<Matrix>& x0, const std::vector<Matrix>& x1,
                   const Matrix& controls, int horizon, Solver solver) {
  if (horizon < 0) throw std::invalid_argument("predict: horizon must be non-negative");
  ad::Tape tape;
  tape.set_frozen(true);
  std::mt19937_64 unused(0);
  const InitialState init =
      build_initial_state(tape, model.vae(), constants(tape, x0), constants(tape, x1), model.config().dt, unused, false);
  const int w = model.spec().position_width();
  const LagrangianDynamics* lag = model.lagrangian();

  Prediction out;
  Matrix s = init.state.value();
  for (int tau = 0; tau <= horizon; ++tau) {
    if (tau > 0) {
      // A fresh tape per step keeps memory flat over long horizons.
      auto field = [&](const Matrix& state, const Matrix& uu) {
        ad::Tape t;
        t.set_frozen(true);
        return Matrix(model.dynamics().rhs(t, t.constant(state), t.constant(uu)).value());
      };
      s = step(solver, field, s, controls, model.config().dt, static_cast<std::size_t>(tau));
    }
    ad::Tape t;
    t.set_frozen(true);
    const Var sv = t.constant(s);
    std::vector<Matrix> imgs;
    for (const auto& v : model.vae().decode(t, ad::slice_cols(sv, 0, w))) imgs.push_back(v.value());
    out.frames.push_back(std::move(imgs));
    if (lag) out.energies.push_back(lag->energy(t, sv).value());
    out.states.push_back(s);
  }
  return out;
}

namespace {

EvalResult eval_windows(const Model& model, const Dataset& data, const std::vector<Window>& windows, int horizon,
                        Solver solver, int chunk) {
  if (chunk < 1) throw ConfigError("evaluation chunk must be positive");
  EvalResult res;
  res.per_step.assign(static_cast<std::size_t>(horizon) + 1, 0.0);
  const int hw = data.pixels(), nb = data.bodies();
  for (std::size_t start = 0; start < windows.size(); start += static_cast<std::size_t>(chunk)) {
    const std::size_t end = std::min(windows.size(), start + static_cast<std::size_t>(chunk));
    const std::vector<Window> ws(windows.begin() + static_cast<std::ptrdiff_t>(start),
                                 windows.begin() + static_cast<std::ptrdiff_t>(end));
    const TrajectoryBatch b = make_batch(data, ws, horizon);
    Prediction p;
    try {
      p = predict(model, b.frames[0], b.frames[1], b.controls, horizon, solver);
    } catch (const IntegrationDiverged&) {
      res.diverged = true;
      res.mse = std::numeric_limits<double>::infinity();
      return res;
    }
    for (int tau = 0; tau <= horizon; ++tau) {
      double se = 0.0;
      for (int body = 0; body < nb; ++body) {
        se += (p.frames[static_cast<std::size_t>(tau)][static_cast<std::size_t>(body)] -
               b.frames[static_cast<std::size_t>(tau)][static_cast<std::size_t>(body)])
                  .squaredNorm();
      }
      res.per_step[static_cast<std::size_t>(tau)] += se;
    }
    res.sequences += static_cast<int>(end - start);
  }
  const double denom = static_cast<double>(res.sequences) * nb * hw;
  double sum = 0.0;
  for (int tau = 0; tau <= horizon; ++tau) {
    res.per_step[static_cast<std::size_t>(tau)] /= denom;
    if (tau > 0) sum += res.per_step[static_cast<std::size_t>(tau)];
  }
  res.mse = sum / horizon;
  return res;
}

std::vector<int> all_records(const Dataset& data, const std::vector<int>& records) {
  if (!records.empty()) return records;
  std::vector<int> recs(static_cast<std::size_t>(data.records()));
  for (int r = 0; r < data.records(); ++r) recs[static_cast<std::size_t>(r)] = r;
  return recs;
}

}  // namespace

EvalResult eval_pixel_mse(const Model& model, const Dataset& data, int horizon, const std::vector<int>& records,
                          Solver solver, int chunk) {
  if (horizon < 1 || horizon >= data.frames()) throw ConfigError("eval_pixel_mse: horizon must be in [1, T]");
  std::vector<Window> ws;
  for (int r : all_records(data, records)) ws.push_back({r, 0});
  return eval_windows(model, data, ws, horizon, solver, chunk);
}

EvalResult eval_window_mse(const Model& model, const Dataset& data, int t_pred, const std::vector<int>& records,
                           Solver solver, int chunk) {
  const WindowSet set = reorganize(data, t_pred, all_records(data, records));
  return eval_windows(model, data, set.windows, t_pred, solver, chunk);
}

// ---------------------------------------------------------------------------
// Training configuration

nlohmann::json to_json(const TrainConfig& c) {
  return {{"t_pred", c.t_pred},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"train_solver", to_string(c.train_solver)},
          {"eval_solver", to_string(c.eval_solver)},
          {"batching", to_string(c.batching)},
          {"zero_weight", c.zero_weight},
          {"anneal_rate", c.anneal_rate},
          {"anneal_cap", c.anneal_cap},
          {"eval_every", c.eval_every},
          {"eval_horizon", c.eval_horizon},
          {"eval_records", c.eval_records},
          {"seed", c.seed}};
}

void apply_json(TrainConfig& c, const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("training config must be an object");
  try {
    for (const auto& [key, value] : doc.items()) {
      if (key == "t_pred") c.t_pred = value.get<int>();
      else if (key == "epochs") c.epochs = value.get<int>();
      else if (key == "batch_size") c.batch_size = value.get<int>();
      else if (key == "learning_rate") c.learning_rate = value.get<double>();
      else if (key == "train_solver") c.train_solver = solver_from_string(value.get<std::string>());
      else if (key == "eval_solver") c.eval_solver = solver_from_string(value.get<std::string>());
      else if (key == "batching") c.batching = batch_mode_from_string(value.get<std::string>());
      else if (key == "zero_weight") c.zero_weight = value.get<double>();
      else if (key == "anneal_rate") c.anneal_rate = value.get<double>();
      else if (key == "anneal_cap") c.anneal_cap = value.get<double>();
      else if (key == "eval_every") c.eval_every = value.get<int>();
      else if (key == "eval_horizon") c.eval_horizon = value.get<int>();
      else if (key == "eval_records") c.eval_records = value.get<int>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else throw ConfigError("unknown training key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("training config: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Optimisation loop

namespace {

std::string rng_state(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

void restore_rng(std::mt19937_64& rng, const std::string& state) {
  std::istringstream is(state);
  is >> rng;
  if (!is) throw FormatError("checkpoint carries a malformed sampler state");
}

std::vector<int> evenly_spaced(int n, int k) {
  std::vector<int> out;
  if (k <= 0 || n <= 0) return out;
  k = std::min(k, n);
  for (int i = 0; i < k; ++i) out.push_back(static_cast<int>((static_cast<long long>(i) * n) / k));
  return out;
}

void check_config(const TrainConfig& c, const Dataset& train) {
  if (c.t_pred < 1 || c.t_pred >= train.manifest.config.steps) throw ConfigError("t_pred must be in [1, T)");
  if (c.epochs < 0) throw ConfigError("epochs must be non-negative");
  if (c.eval_horizon < 0) throw ConfigError("eval_horizon must be non-negative");
  if (c.batch_size < 1) throw ConfigError("batch_size must be positive");
  if (!(c.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (c.zero_weight < 0.0 || c.zero_weight > 1.0) throw ConfigError("zero_weight must be in [0, 1]");
}

std::string format_row(int epoch, const LossBreakdown& l, double val, double lambda) {
  std::ostringstream os;
  os << std::setprecision(9) << epoch << ',' << l.vae_nll << ',' << l.kl << ',' << l.pred << ',' << l.vm_reg << ','
     << l.total << ',';
  if (std::isfinite(val)) os << val;
  os << ',' << lambda << '\n';
  return os.str();
}

}  // namespace

FitResult fit(Model& model, const Dataset& train, const Dataset* val, const TrainConfig& config,
              const std::string& resume_from) {
  check_config(config, train);
  if (train.manifest.spec.name != model.spec().name) throw ConfigError("dataset system does not match the model");
  const WindowSet windows = reorganize(train, config.t_pred);

  ad::AdamConfig adam_cfg;
  adam_cfg.learning_rate = config.learning_rate;
  ad::Adam opt(model.params(), adam_cfg);
  std::mt19937_64 rng(config.seed);
  FitResult res;
  int start_epoch = 0;

  if (!resume_from.empty()) {
    nlohmann::json hyper = read_checkpoint(resume_from, model.params(), &opt);
    const auto& state = hyper.at("extra").at("train_state");
    start_epoch = state.at("epoch").get<int>();
    restore_rng(rng, state.at("rng").get<std::string>());
    res.best_epoch = state.at("best_epoch").get<int>();
    if (state.at("best_val").is_number()) res.best_val_mse = state.at("best_val").get<double>();
    res.skipped_batches = state.at("skipped").get<int>();
  }

  std::ofstream log;
  fs::path out;
  if (!config.out_dir.empty()) {
    out = config.out_dir;
    fs::create_directories(out);
    const bool append = !resume_from.empty() && fs::exists(out / "train_log.csv");
    log.open(out / "train_log.csv", append ? std::ios::app : std::ios::trunc);
    if (!log) throw std::runtime_error("cannot write training log in '" + out.string() + "'");
    if (!append) log << "epoch,vae_nll,kl,pred,vm_reg,total,val_pixel_mse,lambda\n";
  }
  const std::vector<int> val_records = val ? evenly_spaced(val->records(), config.eval_records) : std::vector<int>{};

  auto train_state = [&](int next_epoch) {
    return nlohmann::json{{"epoch", next_epoch},
                          {"rng", rng_state(rng)},
                          {"best_epoch", res.best_epoch},
                          {"best_val", std::isfinite(res.best_val_mse) ? nlohmann::json(res.best_val_mse) : nlohmann::json()},
                          {"skipped", res.skipped_batches},
                          {"train", to_json(config)}};
  };

  int next_epoch = start_epoch;
  for (int epoch = start_epoch; epoch < config.epochs; ++epoch) {
    next_epoch = epoch + 1;
    const double lambda = anneal_lambda(epoch, config.anneal_rate, config.anneal_cap);
    const TrajectoryBatch batch = sample_batch(train, windows, config.batch_size, config.batching, rng, config.zero_weight);
    LossBreakdown parts;
    try {
      parts = compute_loss(model, batch, lambda, rng, config.train_solver);
    } catch (const IntegrationDiverged&) {
      ++res.skipped_batches;
      continue;
    } catch (const SingularMassError&) {
      ++res.skipped_batches;
      continue;
    }
    if (!std::isfinite(parts.total)) {
      res.aborted = true;
      break;
    }
    opt.step(model.params());
    res.last = parts;
    res.epochs_run = epoch + 1 - start_epoch;

    double val_mse = std::numeric_limits<double>::quiet_NaN();
    const bool last_epoch = epoch + 1 == config.epochs;
    if (val && config.eval_every > 0 && ((epoch + 1) % config.eval_every == 0 || last_epoch)) {
      if (config.eval_horizon > 0) {
        const int horizon = std::min(config.eval_horizon, val->frames() - 1);
        val_mse = eval_pixel_mse(model, *val, horizon, val_records, config.eval_solver).mse;
      } else {
        val_mse = eval_window_mse(model, *val, config.t_pred, val_records, config.eval_solver).mse;
      }
      if (val_mse < res.best_val_mse) {
        res.best_val_mse = val_mse;
        res.best_epoch = epoch + 1;
        if (!out.empty()) save_model((out / "best.ckpt").string(), model, nullptr, {{"epoch", epoch + 1}, {"val_pixel_mse", val_mse}});
      }
    }
    if (log.is_open()) log << format_row(epoch, parts, val_mse, lambda) << std::flush;
    if (config.on_epoch && !config.on_epoch(epoch, parts)) break;
  }
  if (!out.empty() && !res.aborted) {
    save_model((out / "last.ckpt").string(), model, &opt, {{"train_state", train_state(next_epoch)}});
  }
  return res;
}

}  // namespace lgv
