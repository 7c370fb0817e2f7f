// lgv: generate datasets, train, predict, control and evaluate from the command line.
#include "cli.hpp"

#include "lgv/errors.hpp"

#include <CLI11.hpp>

#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

// Command-line overrides, applied on top of the config file.
struct Overrides {
  std::string config;
  std::optional<std::string> system, el_form, dynamics, vae, batching, solver, mode, data, val_data;
  std::optional<std::uint64_t> seed;
  std::optional<int> t_pred, epochs, horizon, record;
  std::vector<std::string> checkpoints;
  std::string out;
  std::string resume;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "JSON run config; flags override its values")->check(CLI::ExistingFile);
  cmd->add_option("--system", o.system)->check(CLI::IsMember({"pendulum", "cartpole", "acrobot"}));
  cmd->add_option("--seed", o.seed);
  cmd->add_option("--el-form", o.el_form)->check(CLI::IsMember({"full", "eq3"}));
  cmd->add_option("--out", o.out, "output directory (created when missing)")->required();
}

void add_data(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--data", o.data, "training dataset directory (generated from the config when absent)");
  cmd->add_option("--val-data", o.val_data, "held-out dataset directory");
}

lgv::cli::RunConfig resolve(const Overrides& o, bool training) {
  lgv::cli::RunConfig c = o.config.empty() ? lgv::cli::RunConfig{} : lgv::cli::load_run_config(o.config);
  if (o.system) c.system = *o.system;
  if (o.seed) c.seed = *o.seed;
  if (o.el_form) c.el_form = *o.el_form;
  if (o.dynamics) c.model.dynamics = *o.dynamics;
  if (o.vae) c.model.vae = *o.vae;
  if (o.batching) c.train.batching = lgv::batch_mode_from_string(*o.batching);
  // --solver picks the training solver for `train` and the rollout solver elsewhere.
  if (o.solver) (training ? c.train.train_solver : c.train.eval_solver) = lgv::solver_from_string(*o.solver);
  if (o.t_pred) c.train.t_pred = *o.t_pred;
  if (o.epochs) c.train.epochs = *o.epochs;
  if (o.horizon) c.predict.horizon = *o.horizon;
  if (o.record) c.predict.record = *o.record;
  if (o.mode) c.control.mode = *o.mode;
  if (o.data) c.data_dir = *o.data;
  if (o.val_data) c.val_dir = *o.val_data;
  if (!o.checkpoints.empty()) c.checkpoints = o.checkpoints;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lagrangian latent dynamics from images: data, training, prediction and control"};
  app.require_subcommand(1);
  Overrides o;

  auto* gen = app.add_subcommand("gen-data", "render a dataset directory");
  add_common(gen, o);

  auto* train = app.add_subcommand("train", "fit a model; writes checkpoints and train_log.csv");
  add_common(train, o);
  add_data(train, o);
  train->add_option("--dynamics", o.dynamics)->check(CLI::IsMember({"lagrangian", "mlp"}));
  train->add_option("--vae", o.vae)->check(CLI::IsMember({"coordinate-aware", "cavae", "traditional"}));
  train->add_option("--t-pred", o.t_pred)->check(CLI::PositiveNumber);
  train->add_option("--solver", o.solver)->check(CLI::IsMember({"euler", "rk4"}));
  train->add_option("--batching", o.batching)->check(CLI::IsMember({"standard", "homogeneous"}));
  train->add_option("--epochs", o.epochs, "optimizer steps")->check(CLI::PositiveNumber);
  train->add_option("--resume", o.resume, "last.ckpt of an interrupted run")->check(CLI::ExistingFile);

  auto* predict = app.add_subcommand("predict", "roll out a held-out sequence; writes predict.csv and a PNG strip");
  add_common(predict, o);
  predict->add_option("--checkpoint", o.checkpoints)->required();
  predict->add_option("--val-data", o.val_data, "dataset to predict from (default: one fresh held-out sequence)");
  predict->add_option("--horizon", o.horizon)->check(CLI::PositiveNumber);
  predict->add_option("--record", o.record)->check(CLI::NonNegativeNumber);
  predict->add_option("--solver", o.solver)->check(CLI::IsMember({"euler", "rk4"}));

  auto* control = app.add_subcommand("control", "closed-loop energy-shaping episode; writes episode.csv and a PNG strip");
  add_common(control, o);
  control->add_option("--checkpoint", o.checkpoints, "model for --mode learned");
  control->add_option("--mode", o.mode)->check(CLI::IsMember({"oracle", "learned"}));

  auto* eval = app.add_subcommand("eval", "window pixel MSE per checkpoint; writes eval.csv");
  add_common(eval, o);
  add_data(eval, o);
  eval->add_option("--checkpoint", o.checkpoints, "repeatable; one row per checkpoint")->required();
  eval->add_option("--t-pred", o.t_pred)->check(CLI::PositiveNumber);
  eval->add_option("--solver", o.solver)->check(CLI::IsMember({"euler", "rk4"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return lgv::cli::cmd_gen_data(resolve(o, false), o.out, std::cout);
    if (*train) return lgv::cli::cmd_train(resolve(o, true), o.out, o.resume, std::cout);
    if (*predict) return lgv::cli::cmd_predict(resolve(o, false), o.out, std::cout);
    if (*control) return lgv::cli::cmd_control(resolve(o, false), o.out, std::cout);
    if (*eval) return lgv::cli::cmd_eval(resolve(o, false), o.out, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
