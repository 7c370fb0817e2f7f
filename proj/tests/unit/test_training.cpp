#include "lgv/errors.hpp"
#include "lgv/training.hpp"

#include "finite_difference.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace lgv;
using ad::Matrix;
namespace fs = std::filesystem;

namespace {

ModelConfig small_model(SystemKind kind, DynamicsKind dyn = DynamicsKind::Lagrangian, VaeKind vae = VaeKind::CoordinateAware) {
  ModelConfig c;
  c.spec = make_system(kind);
  c.dynamics = dyn;
  c.vae = vae;
  c.vae_config.hidden = 16;
  c.vae_config.height = 12;
  c.vae_config.width = 12;
  c.dynamics_config.hidden = 8;
  c.dynamics_config.layers = 2;
  c.init_seed = 3;
  return c;
}

DatasetConfig small_data(int n_ic, std::uint64_t seed, int size = 12) {
  DatasetConfig d;
  d.n_ic = n_ic;
  d.seed = seed;
  d.height = size;
  d.width = size;
  d.steps = 6;
  return d;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("annealing schedule") {
  CHECK(anneal_lambda(0) == 0.0);
  CHECK(anneal_lambda(1600) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(anneal_lambda(10000) == 0.375);
  CHECK(anneal_lambda(3000) == 0.375);
  CHECK_THROWS(anneal_lambda(-1));
}

TEST_CASE("loss terms add up and match their definitions") {
  const Model model(small_model(SystemKind::CartPole));
  const Dataset data = generate_dataset(model.spec(), small_data(2, 4));
  const WindowSet ws = reorganize(data, 3);
  std::mt19937_64 pick(1);
  const TrajectoryBatch batch = sample_batch(data, ws, 4, BatchMode::Standard, pick);

  std::mt19937_64 r1(7), r2(7);
  ad::Tape tape;
  const LossGraph g = build_loss(tape, model, batch, 0.2, r1);
  const LossBreakdown& l = g.parts;
  CHECK(l.total == doctest::Approx(l.vae_nll + l.kl + l.pred + l.vm_reg).epsilon(1e-14));
  for (double v : {l.vae_nll, l.kl, l.pred, l.vm_reg}) {
    CHECK(std::isfinite(v));
    CHECK(v >= 0.0);
  }

  // KL and regulariser against the per-coordinate analytic forms.
  ad::Tape t2;
  t2.set_frozen(true);
  std::vector<ad::Var> x0;
  for (const auto& m : batch.frames[0]) x0.push_back(t2.constant(m));
  const Posterior post = model.vae().encode(t2, x0);
  double kl = 0, norms = 0;
  for (int b = 0; b < 4; ++b) {
    const double mean = post[0].mean.value()(b, 0), lv = post[0].log_var.value()(b, 0);
    kl += gauss_kl_to_std_normal(GaussianParam{mean, lv});
    kl += vm_kl_to_uniform(post[1].kappa.value()(b, 0));
    norms += post[1].norm.value()(b, 0);
  }
  CHECK(l.kl == doctest::Approx(kl / 4).epsilon(1e-12));
  CHECK(l.vm_reg == doctest::Approx(0.2 * norms / 4).epsilon(1e-12));

  std::mt19937_64 r3(7);
  ad::Tape t3;
  CHECK(build_loss(t3, model, batch, 0.0, r3).parts.vm_reg == 0.0);
  ad::Tape t4;
  CHECK(build_loss(t4, model, batch, 0.2, r2).parts.total == l.total);
}

TEST_CASE("compute_loss gradients match finite differences") {
  for (auto kind : {SystemKind::Pendulum, SystemKind::CartPole}) {
    Model model(small_model(kind));
    const Dataset data = generate_dataset(model.spec(), small_data(1, 5));
    const WindowSet ws = reorganize(data, 2);
    std::mt19937_64 pick(2);
    const TrajectoryBatch batch = sample_batch(data, ws, 3, BatchMode::Standard, pick);

    std::mt19937_64 seeded(11);
    compute_loss(model, batch, 0.3, seeded);
    auto value = [&] {
      std::mt19937_64 r(11);
      ad::Tape t;
      t.set_frozen(true);
      return build_loss(t, model, batch, 0.3, r).parts.total;
    };
    std::mt19937_64 probe_rng(17);
    auto& store = model.params();
    const std::size_t n = store.scalar_count();
    int checked = 0, agreed = 0;
    while (checked < 32) {
      const std::size_t k = static_cast<std::size_t>(probe_rng() % n);
      const double analytic = store.grad_element(k);
      const double fd = testing::central_difference(value, store.element(k), 1e-6);
      if (std::abs(fd) < 1e-7 && std::abs(analytic) < 1e-7) continue;
      ++checked;
      if (testing::relative_error(analytic, fd, 1e-6) < 1e-3) ++agreed;
    }
    // ReLU kinks can fall inside a finite-difference stencil; allow one.
    CHECK(agreed >= 31);
  }
}

TEST_CASE("four ablation variants share the plumbing") {
  const Dataset data = generate_dataset(make_system(SystemKind::Pendulum), small_data(1, 6));
  const WindowSet ws = reorganize(data, 2);
  for (auto dyn : {DynamicsKind::Lagrangian, DynamicsKind::Mlp}) {
    for (auto vae : {VaeKind::CoordinateAware, VaeKind::Traditional}) {
      Model model(small_model(SystemKind::Pendulum, dyn, vae));
      CHECK((model.lagrangian() != nullptr) == (dyn == DynamicsKind::Lagrangian));
      CHECK(model.vae().kind() == vae);
      std::mt19937_64 rng(1);
      const LossBreakdown l = compute_loss(model, sample_batch(data, ws, 2, BatchMode::Standard, rng), 0.1, rng);
      CHECK(std::isfinite(l.total));
    }
  }
}

TEST_CASE("training uses Euler steps and evaluation uses RK4") {
  Model model(small_model(SystemKind::Pendulum));
  const Dataset data = generate_dataset(model.spec(), small_data(1, 6));
  const WindowSet ws = reorganize(data, 3);
  std::mt19937_64 rng(1);
  const TrajectoryBatch batch = sample_batch(data, ws, 2, BatchMode::Standard, rng);
  step_counters().reset();
  compute_loss(model, batch, 0.1, rng);
  CHECK(step_counters().euler == 3);
  CHECK(step_counters().rk4 == 0);
  step_counters().reset();
  eval_pixel_mse(model, data, 4);
  CHECK(step_counters().euler == 0);
  CHECK(step_counters().rk4 == 4);
}

TEST_CASE("model checkpoints round trip") {
  Model model(small_model(SystemKind::Acrobot));
  const auto path = (fs::temp_directory_path() / "lgv_model_ckpt.bin").string();
  save_model(path, model, nullptr, {{"tag", 1}});
  nlohmann::json extra;
  auto loaded = load_model(path, nullptr, &extra);
  CHECK(extra.at("tag") == 1);
  REQUIRE(loaded->params().size() == model.params().size());
  for (int i = 0; i < model.params().size(); ++i) CHECK(loaded->params().value(i) == model.params().value(i));
  CHECK(to_json(loaded->config()) == to_json(model.config()));
  fs::remove(path);
  CHECK_THROWS_AS(load_model(path), FormatError);
}

TEST_CASE("evaluation of a perfect predictor is zero") {
  // A dataset whose frames are the model's own predictions.
  Model model(small_model(SystemKind::Pendulum));
  Dataset data = generate_dataset(model.spec(), small_data(1, 8));
  for (int rec = 0; rec < data.records(); ++rec) {
    const TrajectoryBatch b = make_batch(data, {{rec, 0}}, data.frames() - 1);
    const Prediction p = predict(model, b.frames[0], b.frames[1], b.controls, data.frames() - 1);
    // Frames 0 and 1 must stay as they are, since they define the initial state.
    for (int t = 2; t < data.frames(); ++t) {
      float* dst = const_cast<float*>(data.frame(rec, t, 0));
      for (int px = 0; px < data.pixels(); ++px) dst[px] = static_cast<float>(p.frames[static_cast<std::size_t>(t)][0](0, px));
    }
  }
  const EvalResult r = eval_pixel_mse(model, data, data.frames() - 1);
  for (std::size_t t = 2; t < r.per_step.size(); ++t) CHECK(r.per_step[t] < 1e-12);
}

TEST_CASE("resumed training reproduces the uninterrupted run") {
  const Dataset train = generate_dataset(make_system(SystemKind::Pendulum), small_data(2, 9));
  const Dataset val = generate_dataset(make_system(SystemKind::Pendulum), small_data(1, 10));
  TrainConfig tc;
  tc.epochs = 12;
  tc.batch_size = 4;
  tc.eval_every = 4;
  tc.eval_horizon = 0;
  tc.eval_records = 3;
  tc.seed = 5;
  const fs::path a = fs::temp_directory_path() / "lgv_fit_a", b = fs::temp_directory_path() / "lgv_fit_b";
  fs::remove_all(a);
  fs::remove_all(b);

  Model full(small_model(SystemKind::Pendulum));
  tc.out_dir = a.string();
  const FitResult ra = fit(full, train, &val, tc);
  CHECK(ra.epochs_run == 12);
  CHECK(fs::exists(a / "best.ckpt"));

  Model part(small_model(SystemKind::Pendulum));
  tc.out_dir = b.string();
  tc.on_epoch = [](int epoch, const LossBreakdown&) { return epoch < 5; };
  fit(part, train, &val, tc);
  tc.on_epoch = nullptr;
  Model resumed(small_model(SystemKind::Pendulum));
  const FitResult rb = fit(resumed, train, &val, tc, (b / "last.ckpt").string());
  CHECK(rb.epochs_run == 6);
  CHECK(read_file(a / "train_log.csv") == read_file(b / "train_log.csv"));
  for (int i = 0; i < full.params().size(); ++i) CHECK(full.params().value(i) == resumed.params().value(i));

  const std::string log = read_file(a / "train_log.csv");
  CHECK(log.rfind("epoch,vae_nll,kl,pred,vm_reg,total,val_pixel_mse,lambda\n", 0) == 0);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("training config keys") {
  TrainConfig c;
  apply_json(c, {{"t_pred", 3}, {"batching", "standard"}, {"train_solver", "euler"}});
  CHECK(c.t_pred == 3);
  CHECK(c.batching == BatchMode::Standard);
  CHECK_THROWS_AS(apply_json(c, {{"bogus", 1}}), ConfigError);
  TrainConfig d;
  apply_json(d, to_json(c));
  CHECK(to_json(d) == to_json(c));
}

TEST_CASE("window evaluation covers every reorganized window") {
  Model model(small_model(SystemKind::Pendulum));
  const Dataset data = generate_dataset(model.spec(), small_data(1, 12));
  const EvalResult w = eval_window_mse(model, data, 2);
  CHECK(w.sequences == data.records() * (data.frames() - 1 - 2));
  CHECK(w.per_step.size() == 3);
  const EvalResult r = eval_pixel_mse(model, data, 2, {0});
  const EvalResult w0 = eval_window_mse(model, data, 2, {0});
  CHECK(w0.sequences == data.frames() - 3);
  CHECK(std::isfinite(w0.mse));
  CHECK(r.sequences == 1);
}
