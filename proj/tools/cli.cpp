#include "cli.hpp"

#include "png_strip.hpp"

#include "lgv/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

namespace lgv::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json dataset_json(const DatasetConfig& d) {
  return {{"n_ic", d.n_ic},
          {"control_values", d.control_values},
          {"steps", d.steps},
          {"dt", d.dt},
          {"substeps", d.substeps},
          {"height", d.height},
          {"width", d.width},
          {"supersample", d.supersample},
          {"position_range", d.position_range},
          {"velocity_range", d.velocity_range},
          {"store_gt", d.store_gt}};
}

void apply_dataset(DatasetConfig& d, const json& doc) {
  for (const auto& [key, v] : doc.items()) {
    if (key == "n_ic") d.n_ic = v.get<int>();
    else if (key == "control_values") d.control_values = v.get<std::vector<double>>();
    else if (key == "steps") d.steps = v.get<int>();
    else if (key == "dt") d.dt = v.get<double>();
    else if (key == "substeps") d.substeps = v.get<int>();
    else if (key == "height") d.height = v.get<int>();
    else if (key == "width") d.width = v.get<int>();
    else if (key == "supersample") d.supersample = v.get<int>();
    else if (key == "position_range") d.position_range = v.get<double>();
    else if (key == "velocity_range") d.velocity_range = v.get<double>();
    else if (key == "store_gt") d.store_gt = v.get<bool>();
    else throw ConfigError("unknown dataset key '" + key + "'");
  }
}

json model_json(const ModelSection& m) {
  return {{"dynamics", m.dynamics},   {"vae", m.vae},           {"vae_hidden", m.vae_hidden},
          {"canvas_hidden", m.canvas_hidden}, {"window_scale", m.window_scale}, {"canvas_bias", m.canvas_bias},
          {"dyn_hidden", m.dyn_hidden}, {"dyn_layers", m.dyn_layers}, {"constant_g", m.constant_g},
          {"mass_eps", m.mass_eps}};
}

void apply_model(ModelSection& m, const json& doc) {
  for (const auto& [key, v] : doc.items()) {
    if (key == "dynamics") m.dynamics = v.get<std::string>();
    else if (key == "vae") m.vae = v.get<std::string>();
    else if (key == "vae_hidden") m.vae_hidden = v.get<int>();
    else if (key == "canvas_hidden") m.canvas_hidden = v.get<int>();
    else if (key == "window_scale") m.window_scale = v.get<double>();
    else if (key == "canvas_bias") m.canvas_bias = v.get<double>();
    else if (key == "dyn_hidden") m.dyn_hidden = v.get<int>();
    else if (key == "dyn_layers") m.dyn_layers = v.get<int>();
    else if (key == "constant_g") m.constant_g = v.get<bool>();
    else if (key == "mass_eps") m.mass_eps = v.get<double>();
    else throw ConfigError("unknown model key '" + key + "'");
  }
}

json control_json(const ControlSection& c) {
  return {{"mode", c.mode},
          {"gains", c.gains},
          {"kp", c.kp},
          {"kd", c.kd},
          {"steps", c.steps},
          {"dt", c.dt},
          {"substeps", c.substeps},
          {"saturation", c.saturation},
          {"zero_order_hold", c.zero_order_hold},
          {"tolerance", c.tolerance},
          {"strip_stride", c.strip_stride},
          {"start", c.start},
          {"goal", c.goal}};
}

void apply_control(ControlSection& c, const json& doc) {
  for (const auto& [key, v] : doc.items()) {
    if (key == "mode") c.mode = v.get<std::string>();
    else if (key == "gains") c.gains = v.get<std::string>();
    else if (key == "kp") c.kp = v.get<double>();
    else if (key == "kd") c.kd = v.get<double>();
    else if (key == "steps") c.steps = v.get<int>();
    else if (key == "dt") c.dt = v.get<double>();
    else if (key == "substeps") c.substeps = v.get<int>();
    else if (key == "saturation") c.saturation = v.get<double>();
    else if (key == "zero_order_hold") c.zero_order_hold = v.get<bool>();
    else if (key == "tolerance") c.tolerance = v.get<double>();
    else if (key == "strip_stride") c.strip_stride = v.get<int>();
    else if (key == "start") c.start = v.get<std::vector<double>>();
    else if (key == "goal") c.goal = v.get<std::vector<double>>();
    else throw ConfigError("unknown control key '" + key + "'");
  }
}

void write_config(const RunConfig& c, const fs::path& out) {
  fs::create_directories(out);
  std::ofstream f(out / "config.json", std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write '" + (out / "config.json").string() + "'");
  f << to_json(c).dump(2) << "\n";
}

std::vector<int> evenly_spaced(int n, int k) {
  std::vector<int> out;
  if (k <= 0 || k >= n) {
    for (int i = 0; i < n; ++i) out.push_back(i);
    return out;
  }
  for (int i = 0; i < k; ++i) out.push_back(static_cast<int>((static_cast<long long>(i) * n) / k));
  return out;
}

Frame frame_of(const Dataset& d, int record, int t) {
  Frame f;
  const int h = d.manifest.config.height, w = d.manifest.config.width;
  for (int b = 0; b < d.bodies(); ++b) {
    const float* p = d.frame(record, t, b);
    Image img(h, w);
    for (int i = 0; i < h * w; ++i) img.data()[i] = p[i];
    f.push_back(std::move(img));
  }
  return f;
}

Frame frame_of(const std::vector<ad::Matrix>& bodies, int row, int h, int w) {
  Frame f;
  for (const auto& m : bodies) f.push_back(Eigen::Map<const Image>(m.row(row).data(), h, w));
  return f;
}

double frame_mse(const Frame& a, const Frame& b) {
  double se = 0.0;
  Eigen::Index n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    se += (a[i] - b[i]).squaredNorm();
    n += a[i].size();
  }
  return se / static_cast<double>(n);
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write '" + p.string() + "'");
  f.precision(9);
  return f;
}

std::unique_ptr<Model> load_checkpoint(const RunConfig& c, std::size_t i = 0) {
  if (c.checkpoints.size() <= i) throw ConfigError("this command needs --checkpoint");
  if (!fs::exists(c.checkpoints[i])) throw ConfigError("checkpoint '" + c.checkpoints[i] + "' does not exist");
  return load_model(c.checkpoints[i]);
}

}  // namespace

json to_json(const RunConfig& c) {
  return {{"system", c.system},
          {"el_form", c.el_form},
          {"seed", c.seed},
          {"dataset", dataset_json(c.dataset)},
          {"val_n_ic", c.val_n_ic},
          {"model", model_json(c.model)},
          {"train", to_json(c.train)},
          {"control", control_json(c.control)},
          {"predict", {{"horizon", c.predict.horizon}, {"record", c.predict.record}}},
          {"eval", {{"records", c.eval.records}}},
          {"data_dir", c.data_dir},
          {"val_dir", c.val_dir},
          {"checkpoints", c.checkpoints}};
}

void apply_json(RunConfig& c, const json& doc) {
  if (!doc.is_object()) throw ConfigError("run config must be a JSON object");
  try {
    for (const auto& [key, v] : doc.items()) {
      if (key == "system") c.system = v.get<std::string>();
      else if (key == "el_form") c.el_form = v.get<std::string>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "dataset") apply_dataset(c.dataset, v);
      else if (key == "val_n_ic") c.val_n_ic = v.get<int>();
      else if (key == "model") apply_model(c.model, v);
      else if (key == "train") lgv::apply_json(c.train, v);
      else if (key == "control") apply_control(c.control, v);
      else if (key == "predict") {
        for (const auto& [k, p] : v.items()) {
          if (k == "horizon") c.predict.horizon = p.get<int>();
          else if (k == "record") c.predict.record = p.get<int>();
          else throw ConfigError("unknown predict key '" + k + "'");
        }
      } else if (key == "eval") {
        for (const auto& [k, p] : v.items()) {
          if (k == "records") c.eval.records = p.get<int>();
          else throw ConfigError("unknown eval key '" + k + "'");
        }
      } else if (key == "data_dir") c.data_dir = v.get<std::string>();
      else if (key == "val_dir") c.val_dir = v.get<std::string>();
      else if (key == "checkpoints") c.checkpoints = v.get<std::vector<std::string>>();
      else throw ConfigError("unknown run config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path + "'");
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  RunConfig c;
  apply_json(c, doc);
  return c;
}

SystemSpec system_of(const RunConfig& c) {
  SystemSpec spec = make_system(c.system);
  spec.el_form = el_form_from_string(c.el_form);
  return spec;
}

ModelConfig model_config_of(const RunConfig& c) {
  ModelConfig m;
  m.spec = system_of(c);
  m.dynamics = dynamics_kind_from_string(c.model.dynamics);
  m.vae = vae_kind_from_string(c.model.vae);
  m.vae_config.height = c.dataset.height;
  m.vae_config.width = c.dataset.width;
  m.vae_config.hidden = c.model.vae_hidden;
  m.vae_config.canvas_hidden = c.model.canvas_hidden;
  m.vae_config.window_scale = c.model.window_scale;
  m.vae_config.canvas_bias = c.model.canvas_bias;
  m.dynamics_config.hidden = c.model.dyn_hidden;
  m.dynamics_config.layers = c.model.dyn_layers;
  m.dynamics_config.constant_g = c.model.constant_g;
  m.dynamics_config.mass_eps = c.model.mass_eps;
  m.dt = c.dataset.dt;
  m.init_seed = c.seed;
  return m;
}

Dataset training_data(const RunConfig& c) {
  if (!c.data_dir.empty()) return read_dataset(c.data_dir);
  DatasetConfig d = c.dataset;
  d.seed = c.seed;
  return generate_dataset(system_of(c), d);
}

Dataset held_out_data(const RunConfig& c) {
  if (!c.val_dir.empty()) return read_dataset(c.val_dir);
  DatasetConfig d = c.dataset;
  d.seed = c.seed + 1;
  d.n_ic = c.val_n_ic;
  return generate_dataset(system_of(c), d);
}

std::string variant_name(const ModelConfig& m) {
  return std::string(m.dynamics == DynamicsKind::Lagrangian ? "Lagrangian" : "MLPdyn") +
         (m.vae == VaeKind::CoordinateAware ? "+caVAE" : "+VAE");
}

std::uint64_t directory_hash(const std::string& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](unsigned char b) {
    h ^= b;
    h *= 1099511628211ull;
  };
  for (const auto& p : files) {
    for (char ch : p.filename().string()) mix(static_cast<unsigned char>(ch));
    std::ifstream in(p, std::ios::binary);
    char buf[1 << 16];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
      for (std::streamsize i = 0; i < in.gcount(); ++i) mix(static_cast<unsigned char>(buf[i]));
    }
  }
  return h;
}

int cmd_gen_data(const RunConfig& c, const std::string& out, std::ostream& log) {
  DatasetConfig d = c.dataset;
  d.seed = c.seed;
  const Dataset data = generate_dataset(system_of(c), d);
  write_dataset(out, data);
  log << "system " << data.manifest.spec.name << ", " << data.records() << " records of " << data.frames()
      << " frames, " << data.bodies() << " bodies at " << d.height << "x" << d.width << "\n";
  std::ostringstream hash;
  hash << std::hex << std::setw(16) << std::setfill('0') << directory_hash(out);
  log << "dataset hash " << hash.str() << "\n";
  // The echo lives beside the dataset, not inside it.
  fs::path dir = fs::path(out).lexically_normal();
  if (!dir.has_filename()) dir = dir.parent_path();
  write_config(c, dir.string() + ".config");
  return 0;
}

int cmd_train(const RunConfig& c, const std::string& out, const std::string& resume, std::ostream& log) {
  write_config(c, out);
  const Dataset train = training_data(c);
  const Dataset val = held_out_data(c);
  Model model(model_config_of(c));
  TrainConfig tc = c.train;
  tc.seed = c.seed;
  tc.out_dir = out;
  const int report = std::max(1, tc.epochs / 20);
  tc.on_epoch = [&](int epoch, const LossBreakdown& l) {
    if ((epoch + 1) % report == 0) log << "epoch " << epoch + 1 << " loss " << l.total << "\n";
    return true;
  };
  const FitResult r = fit(model, train, &val, tc, resume);
  save_model((fs::path(out) / "model.ckpt").string(), model);
  log << variant_name(model.config()) << ": " << r.epochs_run << " epochs, " << r.skipped_batches
      << " skipped batches, best held-out window MSE " << r.best_val_mse << " at epoch " << r.best_epoch << "\n";
  if (r.aborted) {
    log << "training aborted on a non-finite loss\n";
    return 1;
  }
  return 0;
}

int cmd_predict(const RunConfig& c, const std::string& out, std::ostream& log) {
  write_config(c, out);
  const auto model = load_checkpoint(c);
  const int horizon = c.predict.horizon;
  if (horizon < 1) throw ConfigError("predict horizon must be at least 1");
  Dataset data;
  if (!c.val_dir.empty()) {
    data = read_dataset(c.val_dir);
  } else {
    DatasetConfig d = c.dataset;
    d.seed = c.seed + 1;
    d.n_ic = 1;
    d.steps = horizon;
    d.height = model->config().vae_config.height;
    d.width = model->config().vae_config.width;
    data = generate_dataset(model->spec(), d);
  }
  if (data.frames() <= horizon) throw ConfigError("dataset has too few frames for the requested horizon");
  const int rec = c.predict.record;
  if (rec < 0 || rec >= data.records()) throw ConfigError("predict record out of range");

  const TrajectoryBatch b = make_batch(data, {{rec, 0}}, horizon);
  const Prediction p = predict(*model, b.frames[0], b.frames[1], b.controls, horizon, c.train.eval_solver);
  const int h = data.manifest.config.height, w = data.manifest.config.width;
  std::vector<Frame> truth, pred;
  auto csv = open_out(fs::path(out) / "predict.csv");
  csv << "step,pixel_mse,learned_energy\n";
  double sum = 0.0;
  for (int t = 0; t <= horizon; ++t) {
    truth.push_back(frame_of(data, rec, t));
    pred.push_back(frame_of(p.frames[static_cast<std::size_t>(t)], 0, h, w));
    const double mse = frame_mse(truth.back(), pred.back());
    if (t > 0) sum += mse;
    csv << t << ',' << mse << ',';
    if (!p.energies.empty()) csv << p.energies[static_cast<std::size_t>(t)](0, 0);
    csv << '\n';
  }
  csv << "mean," << sum / horizon << ",\n";
  write_strip_png((fs::path(out) / "predict_strip.png").string(), {truth, pred});
  log << "record " << rec << ": mean pixel MSE over " << horizon << " steps " << sum / horizon << "\n";
  return 0;
}

int cmd_control(const RunConfig& c, const std::string& out, std::ostream& log) {
  write_config(c, out);
  const ControlSection& cs = c.control;
  std::unique_ptr<Model> model;
  SystemSpec spec = system_of(c);
  if (cs.mode == "learned") {
    model = load_checkpoint(c);
    spec = model->spec();
  } else if (cs.mode != "oracle") {
    throw ConfigError("control mode must be oracle or learned");
  }
  const int m = spec.dof();
  Eigen::VectorXd q0 = Eigen::VectorXd::Zero(m), goal = Eigen::VectorXd::Zero(m);
  for (int i = 0; i < m; ++i) {
    if (spec.coordinates[static_cast<std::size_t>(i)].kind == CoordKind::Rotational) q0(i) = std::numbers::pi;
  }
  if (!cs.start.empty()) q0 = Eigen::Map<const Eigen::VectorXd>(cs.start.data(), static_cast<Eigen::Index>(cs.start.size()));
  if (!cs.goal.empty()) goal = Eigen::Map<const Eigen::VectorXd>(cs.goal.data(), static_cast<Eigen::Index>(cs.goal.size()));
  if (q0.size() != m || goal.size() != m) throw ConfigError("control start and goal need one value per coordinate");

  RenderConfig rc;
  rc.height = c.dataset.height;
  rc.width = c.dataset.width;
  rc.supersample = c.dataset.supersample;
  rc.params = default_render_params(spec.kind);
  if (model) rc = model_render_config(*model);
  const Frame goal_image = render(spec, goal, rc);

  auto gains_for = [&](const Eigen::MatrixXd& mass) {
    if (cs.gains == "diagonal") return ControllerGains::diagonal(m, cs.kp, cs.kd);
    if (cs.gains == "mass_scaled") return ControllerGains::mass_scaled(mass, cs.kp, cs.kd);
    throw ConfigError("control gains must be diagonal or mass_scaled");
  };
  std::unique_ptr<Controller> ctl;
  LearnedController* learned = nullptr;
  if (model) {
    // Learned mode scales by the learned mass matrix at the encoded goal.
    LearnedController probe(*model, ControllerGains::diagonal(m, 1.0, 1.0), goal_image, rc);
    ad::Tape tape;
    tape.set_frozen(true);
    const Eigen::VectorXd pos = probe.encode(goal_image);
    const ad::Matrix flat = model->lagrangian()->mass_matrix(tape, tape.constant(ad::Matrix(pos.transpose()))).value();
    const Eigen::MatrixXd mass = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(flat.data(), m, m);
    auto lc = std::make_unique<LearnedController>(*model, gains_for(mass), goal_image, rc);
    learned = lc.get();
    ctl = std::move(lc);
  } else {
    ctl = std::make_unique<OracleController>(spec, gains_for(mass_matrix_gt(spec, goal)), goal);
  }

  ClosedLoopConfig cl;
  cl.dt = cs.dt;
  cl.steps = cs.steps;
  cl.substeps = cs.substeps;
  cl.saturation = cs.saturation;
  cl.zero_order_hold = cs.zero_order_hold;
  const Episode ep = closed_loop(make_plant(spec), spec, *ctl, GtState{q0, Eigen::VectorXd::Zero(m)}, goal, cl);

  auto csv = open_out(fs::path(out) / "episode.csv");
  write_episode_csv(csv, spec, ep);

  std::vector<Frame> row;
  const int stride = std::max(1, cs.strip_stride);
  for (std::size_t t = 0; t < ep.steps.size(); t += static_cast<std::size_t>(stride)) row.push_back(render(spec, ep.steps[t].q, rc));
  row.push_back(render(spec, ep.final_state.q, rc));
  row.push_back(goal_image);
  std::vector<std::vector<Frame>> strip{row};

  const double final_distance = ep.steps.back().goal_distance;
  const bool converged = final_distance < cs.tolerance;
  int first = -1;
  for (const auto& s : ep.steps) {
    if (s.goal_distance < cs.tolerance) {
      first = s.step;
      break;
    }
  }
  json summary{{"mode", cs.mode},
               {"converged", converged},
               {"final_goal_distance", final_distance},
               {"first_step_within_tolerance", first},
               {"saturated_steps", ep.saturated_steps},
               {"final_frame_goal_mse", frame_mse(render(spec, ep.final_state.q, rc), goal_image)}};
  if (learned) {
    const Frame decoded = learned->decode(learned->encode(render(spec, ep.final_state.q, rc)));
    summary["final_decoded_goal_mse"] = frame_mse(decoded, goal_image);
    summary["encoded_goal"] = std::vector<double>(learned->goal().data(), learned->goal().data() + m);
    std::vector<Frame> decoded_row;
    for (const auto& f : row) decoded_row.push_back(learned->decode(learned->encode(f)));
    strip.push_back(decoded_row);
  }
  write_strip_png((fs::path(out) / "control_strip.png").string(), strip);
  std::ofstream(fs::path(out) / "summary.json", std::ios::trunc) << summary.dump(2) << "\n";
  log << cs.mode << " control: final goal distance " << final_distance << (converged ? " (converged)" : " (not converged)")
      << "\n";
  return 0;
}

int cmd_eval(const RunConfig& c, const std::string& out, std::ostream& log) {
  write_config(c, out);
  if (c.checkpoints.empty()) throw ConfigError("eval needs at least one --checkpoint");
  std::vector<std::unique_ptr<Model>> models;
  for (std::size_t i = 0; i < c.checkpoints.size(); ++i) models.push_back(load_checkpoint(c, i));
  const Dataset train = training_data(c);
  const Dataset test = held_out_data(c);
  const std::vector<int> train_recs = evenly_spaced(train.records(), c.eval.records);
  const std::vector<int> test_recs = evenly_spaced(test.records(), c.eval.records);

  auto csv = open_out(fs::path(out) / "eval.csv");
  csv << "model,checkpoint,train_mse_x1e3,test_mse_x1e3\n";
  for (std::size_t i = 0; i < models.size(); ++i) {
    const Model& m = *models[i];
    if (m.spec().name != train.manifest.spec.name || m.spec().name != test.manifest.spec.name)
      throw ConfigError("checkpoint '" + c.checkpoints[i] + "' is a " + m.spec().name + " model but the data is " +
                        train.manifest.spec.name);
    const double tr = eval_window_mse(m, train, c.train.t_pred, train_recs, c.train.eval_solver).mse;
    const double te = eval_window_mse(m, test, c.train.t_pred, test_recs, c.train.eval_solver).mse;
    const std::string name = variant_name(m.config());
    csv << name << ',' << c.checkpoints[i] << ',' << fixed(tr * 1e3, 2) << ','
        << fixed(te * 1e3, 2) << '\n';
    log << name << "  train " << fixed(tr * 1e3, 2) << " | test " << fixed(te * 1e3, 2) << "  (x1e-3)\n";
  }
  return 0;
}

}  // namespace lgv::cli
