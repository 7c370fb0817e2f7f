#include "lgv/dynamics_core.hpp"
#include "lgv/errors.hpp"
#include "lgv/integrators.hpp"
#include "lgv/latent_dynamics.hpp"

#include "finite_difference.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

using namespace lgv;
using ad::Matrix;
using std::numbers::pi;

namespace {

// Random valid latent states: angles put (cos, sin) on the unit circle.
Matrix random_states(const StateLayout& l, int batch, std::mt19937_64& rng, double speed = 1.0) {
  std::uniform_real_distribution<double> U(-1.0, 1.0), A(-pi, pi);
  Matrix s(batch, l.state_width());
  for (int b = 0; b < batch; ++b) {
    for (int i = 0; i < l.translational; ++i) s(b, i) = U(rng);
    for (int i = 0; i < l.rotational; ++i) {
      const double phi = A(rng);
      s(b, l.translational + i) = std::cos(phi);
      s(b, l.translational + l.rotational + i) = std::sin(phi);
    }
    for (int i = 0; i < l.dof(); ++i) s(b, l.position_width() + i) = speed * U(rng);
  }
  return s;
}

Matrix random_controls(const StateLayout& l, int batch, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  Matrix u(batch, l.control);
  for (Eigen::Index i = 0; i < u.size(); ++i) u.data()[i] = U(rng);
  return u;
}

const StateLayout kLayouts[] = {{0, 1, 1}, {1, 1, 1}, {0, 2, 1}, {1, 2, 2}};

}  // namespace

TEST_CASE("position block keeps (cos, sin) on the circle") {
  std::mt19937_64 rng(1);
  for (const auto& l : kLayouts) {
    ad::ParamStore store;
    LagrangianDynamics nets(store, "dyn", l, {}, rng);
    ad::Tape tape;
    const Matrix s = random_states(l, 32, rng);
    const Matrix sd = nets.rhs(tape, tape.constant(s), tape.constant(random_controls(l, 32, rng))).value();
    REQUIRE(sd.cols() == l.state_width());
    for (int b = 0; b < 32; ++b) {
      for (int i = 0; i < l.rotational; ++i) {
        const int c = l.translational + i, sn = c + l.rotational;
        CHECK(std::abs(s(b, c) * sd(b, c) + s(b, sn) * sd(b, sn)) < 1e-10);
      }
      for (int i = 0; i < l.translational; ++i) CHECK(sd(b, i) == s(b, l.position_width() + i));
    }
  }
}

TEST_CASE("energy rate equals injected power") {
  // dE/dt along the field is qdot^T g u, hence 0 without control.
  std::mt19937_64 rng(2);
  for (const auto& l : kLayouts) {
    ad::ParamStore store;
    LagrangianDynamics nets(store, "dyn", l, {}, rng);
    const int B = 16;
    const Matrix s = random_states(l, B, rng);
    for (bool controlled : {false, true}) {
      const Matrix u = controlled ? random_controls(l, B, rng) : Matrix::Zero(B, l.control);
      ad::Tape tape;
      ad::Var sv = tape.variable(s);
      tape.backward(ad::sum(nets.energy(tape, sv)));
      const Matrix grad_e = tape.grad(sv);
      ad::Tape t2;
      const Matrix sd = nets.rhs(t2, t2.constant(s), t2.constant(u)).value();
      const Matrix g = nets.input_matrix(t2, t2.constant(s.leftCols(l.position_width()))).value();
      for (int b = 0; b < B; ++b) {
        const double rate = grad_e.row(b).dot(sd.row(b));
        Eigen::Map<const Eigen::Matrix<double, -1, -1, Eigen::RowMajor>> gb(g.row(b).data(), l.dof(), l.control);
        const double power = s.row(b).tail(l.dof()).dot((gb * u.row(b).transpose()).transpose());
        CHECK(std::abs(rate - power) < 1e-8 * std::max(1.0, grad_e.row(b).norm() * sd.row(b).norm()));
      }
    }
  }
}

TEST_CASE("learned energy is conserved along zero-control RK4 rollouts") {
  std::mt19937_64 rng(3);
  for (const auto& l : kLayouts) {
    ad::ParamStore store;
    LagrangianDynamics nets(store, "dyn", l, {}, rng);
    const Matrix s0 = random_states(l, 8, rng);
    const Matrix u = Matrix::Zero(8, l.control);
    auto field = [&](const Matrix& s, const Matrix& uu) {
      ad::Tape t;
      return Matrix(nets.rhs(t, t.constant(s), t.constant(uu)).value());
    };
    auto energy = [&](const Matrix& s) {
      ad::Tape t;
      return Matrix(nets.energy(t, t.constant(s)).value());
    };
    const auto traj = rollout(field, s0, u, 0.01, 100, Solver::Rk4);
    const Matrix e0 = energy(s0);
    double worst = 0;
    for (const auto& s : traj.states) {
      const Matrix e = energy(s);
      for (int b = 0; b < 8; ++b) worst = std::max(worst, std::abs(e(b, 0) - e0(b, 0)) / std::max(std::abs(e0(b, 0)), 1e-3));
    }
    CHECK(worst < 1e-3);
  }
}

TEST_CASE("parameter gradients match finite differences") {
  std::mt19937_64 rng(4);
  const StateLayout l{1, 2, 2};
  DynamicsConfig cfg;
  cfg.hidden = 16;
  ad::ParamStore store;
  LagrangianDynamics nets(store, "dyn", l, cfg, rng);
  const Matrix s = random_states(l, 4, rng);
  const Matrix u = random_controls(l, 4, rng);
  Matrix w(4, l.state_width());
  std::normal_distribution<double> N;
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = N(rng);

  auto objective = [&](ad::Tape& t) { return ad::sum(ad::mul(nets.rhs(t, t.constant(s), t.constant(u)), t.constant(w))); };
  store.zero_grad();
  {
    ad::Tape tape;
    tape.backward(objective(tape));
  }
  auto value = [&] {
    ad::Tape t;
    t.set_frozen(true);
    return objective(t).scalar();
  };
  const std::size_t n = store.scalar_count();
  int checked = 0;
  for (int probe = 0; probe < 64 && checked < 16; ++probe) {
    const std::size_t k = static_cast<std::size_t>(rng() % n);
    const double analytic = store.grad_element(k);
    const double fd = testing::central_difference(value, store.element(k), 1e-5);
    if (std::abs(fd) < 1e-6 && std::abs(analytic) < 1e-6) continue;
    CHECK(testing::relative_error(analytic, fd) < 1e-4);
    ++checked;
  }
  CHECK(checked == 16);
}

TEST_CASE("mass matrix is symmetric positive definite") {
  std::mt19937_64 rng(5);
  const StateLayout l{1, 2, 1};
  ad::ParamStore store;
  LagrangianDynamics nets(store, "dyn", l, {}, rng);
  // Large weights stress the factorization.
  for (auto& t : store) t.value *= 3.0;
  ad::Tape tape;
  std::uniform_real_distribution<double> U(-3, 3);
  Matrix pos(10000, l.position_width());
  for (Eigen::Index i = 0; i < pos.size(); ++i) pos.data()[i] = U(rng);
  const Matrix M = nets.mass_matrix(tape, tape.constant(pos)).value();
  int failures = 0;
  for (int b = 0; b < 10000; ++b) {
    Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>> mb(M.row(b).data());
    Eigen::LLT<Eigen::Matrix3d> llt(mb);
    if (llt.info() != Eigen::Success || (mb - mb.transpose()).cwiseAbs().maxCoeff() > 1e-12) ++failures;
    CHECK(Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(mb).eigenvalues().minCoeff() >= 1e-4 * (1 - 1e-9));
  }
  CHECK(failures == 0);
}

TEST_CASE("pendulum-shaped stand-in nets reproduce the ground truth") {
  // Linear nets (no hidden layers): L = sqrt(1 - eps) so M = 1, V = 10 s2.
  std::mt19937_64 rng(6);
  const StateLayout l{0, 1, 1};
  DynamicsConfig cfg;
  cfg.layers = 0;
  cfg.constant_g = true;
  ad::ParamStore store;
  LagrangianDynamics nets(store, "dyn", l, cfg, rng);
  const double target = std::sqrt(1.0 - cfg.mass_eps);
  store.value(store.index_of("dyn.mass.w0")).setZero();
  store.value(store.index_of("dyn.mass.b0"))(0, 0) = std::log(std::expm1(target));
  Matrix wv = Matrix::Zero(2, 1);
  wv(0, 0) = 10.0;
  store.value(store.index_of("dyn.potential.w0")) = wv;
  store.value(store.index_of("dyn.potential.b0")).setZero();

  const auto spec = make_system(SystemKind::Pendulum);
  std::uniform_real_distribution<double> A(-pi, pi), U(-2, 2);
  for (int trial = 0; trial < 20; ++trial) {
    const double phi = trial == 0 ? pi / 2 : A(rng), phidot = trial == 0 ? 0.0 : U(rng);
    const double u = trial == 0 ? 0.0 : U(rng);
    Matrix s(1, 3);
    s << std::cos(phi), std::sin(phi), phidot;
    ad::Tape tape;
    const Matrix sd = nets.rhs(tape, tape.constant(s), tape.constant(Matrix::Constant(1, 1, u))).value();
    Eigen::VectorXd sv(3), uv(1);
    sv << std::cos(phi), std::sin(phi), phidot;
    uv << u;
    const Eigen::VectorXd gt = gt_rhs(spec, sv, uv);
    for (int i = 0; i < 3; ++i) CHECK(sd(0, i) == doctest::Approx(gt(i)).epsilon(1e-9));
    if (trial == 0) CHECK(sd(0, 2) == doctest::Approx(10.0).epsilon(1e-12));
  }
}

TEST_CASE("torque from an analytic potential follows the chain rule") {
  std::mt19937_64 rng(7);
  const StateLayout l{0, 1, 0};
  DynamicsConfig cfg;
  cfg.layers = 0;
  ad::ParamStore store;
  LagrangianDynamics nets(store, "dyn", l, cfg, rng);
  const double gc = 2.5;
  Matrix wv = Matrix::Zero(2, 1);
  wv(0, 0) = gc;
  store.value(store.index_of("dyn.potential.w0")) = wv;
  for (double phi : {-2.0, -0.4, 0.3, 1.7}) {
    ad::Tape tape;
    Matrix pos(1, 2);
    pos << std::cos(phi), std::sin(phi);
    // dV/dphi for V = gc cos(phi).
    CHECK(nets.potential_gradient(tape, tape.constant(pos)).value()(0, 0) == doctest::Approx(-gc * std::sin(phi)));
  }
}

TEST_CASE("zero velocity and constant potential give zero acceleration") {
  std::mt19937_64 rng(8);
  const StateLayout l{1, 1, 1};
  ad::ParamStore store;
  LagrangianDynamics nets(store, "dyn", l, {}, rng);
  store.value(store.index_of("dyn.potential.w3")).setZero();
  ad::Tape tape;
  Matrix s = random_states(l, 5, rng, 0.0);
  const Matrix sd = nets.rhs(tape, tape.constant(s), tape.constant(Matrix::Zero(5, 1))).value();
  CHECK(sd.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("learned energy examples") {
  std::mt19937_64 rng(9);
  const StateLayout l{1, 1, 1};
  ad::ParamStore store;
  LagrangianDynamics nets(store, "dyn", l, {}, rng);
  Matrix s = random_states(l, 6, rng);
  Matrix rest = s;
  rest.rightCols(2).setZero();
  Matrix fast = s;
  fast.rightCols(2) *= 2.0;
  ad::Tape tape;
  const Matrix v = nets.potential(tape, tape.constant(rest.leftCols(3))).value();
  const Matrix e_rest = nets.energy(tape, tape.constant(rest)).value();
  const Matrix e = nets.energy(tape, tape.constant(s)).value();
  const Matrix e_fast = nets.energy(tape, tape.constant(fast)).value();
  for (int b = 0; b < 6; ++b) {
    CHECK(e_rest(b, 0) == v(b, 0));
    CHECK(e_fast(b, 0) - v(b, 0) == doctest::Approx(4.0 * (e(b, 0) - v(b, 0))).epsilon(1e-12));
  }
}

TEST_CASE("singular mass matrix is reported") {
  std::mt19937_64 rng(10);
  const StateLayout l{0, 2, 1};
  DynamicsConfig cfg;
  cfg.layers = 0;
  cfg.mass_eps = 0.0;
  ad::ParamStore store;
  LagrangianDynamics nets(store, "dyn", l, cfg, rng);
  store.value(store.index_of("dyn.mass.w0")).setZero();
  Matrix b = Matrix::Zero(1, 3);
  b(0, 0) = 1.0;
  b(0, 2) = -200.0;  // softplus(-200) underflows the second pivot
  store.value(store.index_of("dyn.mass.b0")) = b;
  ad::Tape tape;
  Matrix s = random_states(l, 1, rng);
  CHECK_THROWS_AS(nets.rhs(tape, tape.constant(s), tape.constant(Matrix::Zero(1, 1))), SingularMassError);
}

TEST_CASE("MLP field shapes and zero initialization") {
  std::mt19937_64 rng(11);
  for (auto kind : {SystemKind::Pendulum, SystemKind::CartPole, SystemKind::Acrobot}) {
    const auto spec = make_system(kind);
    const StateLayout l{spec.translational_count(), spec.rotational_count(), spec.control_dim()};
    ad::ParamStore store;
    DynamicsConfig cfg;
    MlpDynamics f(store, "mlp", l, cfg, rng);
    ad::Tape tape;
    const Matrix out = f.rhs(tape, tape.constant(random_states(l, 3, rng)), tape.constant(random_controls(l, 3, rng))).value();
    CHECK(out.rows() == 3);
    CHECK(out.cols() == spec.state_width());

    ad::ParamStore zs;
    cfg.mlp_output_scale = 0.0;
    MlpDynamics z(zs, "mlp", l, cfg, rng);
    ad::Tape t2;
    CHECK(z.rhs(t2, t2.constant(random_states(l, 3, rng)), t2.constant(random_controls(l, 3, rng)))
              .value()
              .cwiseAbs()
              .maxCoeff() == 0.0);
  }
}

TEST_CASE("checkpoint round trip") {
  std::mt19937_64 rng(12);
  const StateLayout l{1, 1, 1};
  ad::ParamStore store;
  LagrangianDynamics nets(store, "dyn", l, {}, rng);
  for (auto& t : store) ad::round_to_float32(t.value);
  ad::Adam opt(store, {});
  for (auto& t : store) t.grad = Matrix::Constant(t.value.rows(), t.value.cols(), 0.25);
  opt.step(store);
  const auto path = (std::filesystem::temp_directory_path() / "lgv_ckpt_test.bin").string();
  write_checkpoint(path, store, {{"note", "x"}}, &opt);

  std::mt19937_64 other(99);
  ad::ParamStore copy;
  LagrangianDynamics nets2(copy, "dyn", l, {}, other);
  ad::Adam opt2(copy, {});
  const auto hyper = read_checkpoint(path, copy, &opt2);
  CHECK(hyper.at("note") == "x");
  CHECK(opt2.steps() == 1);
  for (int i = 0; i < store.size(); ++i) {
    CHECK(copy.value(i) == store.value(i));
    CHECK(opt2.first_moments()[static_cast<std::size_t>(i)] == opt.first_moments()[static_cast<std::size_t>(i)]);
    CHECK(opt2.second_moments()[static_cast<std::size_t>(i)] == opt.second_moments()[static_cast<std::size_t>(i)]);
  }

  ad::ParamStore wrong;
  LagrangianDynamics nets3(wrong, "dyn", StateLayout{0, 2, 1}, {}, other);
  CHECK_THROWS_AS(read_checkpoint(path, wrong), FormatError);
  CHECK_THROWS_AS(read_checkpoint_header(path + ".missing"), FormatError);
  std::filesystem::remove(path);
}
