#include "lgv/dynamics_core.hpp"
#include "lgv/errors.hpp"

#include <doctest.h>

#include <complex>
#include <numbers>
#include <random>

using namespace lgv;
using std::numbers::pi;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

// Kinetic energy of point masses computed from body positions; the Hessian
// with respect to qdot is the mass matrix.
double kinetic_from_positions(const SystemSpec& spec, const Eigen::VectorXd& q, const Eigen::VectorXd& qd) {
  const auto& p = spec.phys;
  const double h = 1e-6;
  auto positions = [&](const Eigen::VectorXd& qq) {
    std::vector<Eigen::Vector2d> pts;
    switch (spec.kind) {
      case SystemKind::Pendulum:
        pts.push_back({p.lengths[0] * std::sin(qq(0)), p.lengths[0] * std::cos(qq(0))});
        break;
      case SystemKind::CartPole:
        pts.push_back({qq(0), 0.0});
        pts.push_back({qq(0) + p.lengths[1] * std::sin(qq(1)), p.lengths[1] * std::cos(qq(1))});
        break;
      case SystemKind::Acrobot: {
        const Eigen::Vector2d e1(p.lengths[0] * std::sin(qq(0)), p.lengths[0] * std::cos(qq(0)));
        pts.push_back(e1);
        pts.push_back(e1 + Eigen::Vector2d(p.lengths[1] * std::sin(qq(1)), p.lengths[1] * std::cos(qq(1))));
        break;
      }
    }
    return pts;
  };
  const auto a = positions(q + h * qd);
  const auto b = positions(q - h * qd);
  double T = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Eigen::Vector2d v = (a[i] - b[i]) / (2 * h);
    T += 0.5 * p.masses[i] * v.squaredNorm();
  }
  return T;
}

}  // namespace

TEST_CASE("system specs satisfy the dof count and json round trip") {
  for (auto kind : {SystemKind::Pendulum, SystemKind::CartPole, SystemKind::Acrobot}) {
    const SystemSpec s = make_system(kind);
    CHECK(s.dof() == 3 * s.n_bodies - s.constraints);
    const SystemSpec back = system_spec_from_json(to_json(s));
    CHECK(to_json(back) == to_json(s));
  }
  CHECK(make_system("pendulum").dof() == 1);
  CHECK(make_system("cartpole").coordinates[0].kind == CoordKind::Translational);
  CHECK(make_system("acrobot").rotational_count() == 2);
  CHECK_THROWS_AS(make_system("quadrotor"), ConfigError);

  auto doc = to_json(make_system(SystemKind::Pendulum));
  doc["phys"]["masses"] = std::vector<double>{-1.0};
  CHECK_THROWS_AS(system_spec_from_json(doc), ConfigError);
  doc = to_json(make_system(SystemKind::Pendulum));
  doc["bogus"] = 1;
  CHECK_THROWS_AS(system_spec_from_json(doc), ConfigError);
}

TEST_CASE("encoding order follows frame dependencies") {
  CHECK(encoding_order(make_system(SystemKind::CartPole)) == std::vector<int>{0, 1});
  SystemSpec s = make_system(SystemKind::Acrobot);
  s.encoder_frames[0] = FrameRule{{{1, FrameFn::Sin, 0}}, {}, -1};
  CHECK_THROWS_AS(encoding_order(s), ConfigError);
}

TEST_CASE("mass matrix examples") {
  const auto pend = make_system(SystemKind::Pendulum);
  CHECK(mass_matrix_gt(pend, vec({0.3}))(0, 0) == doctest::Approx(1.0));

  const auto cp = make_system(SystemKind::CartPole);
  const Eigen::MatrixXd M = mass_matrix_gt(cp, vec({0.0, 0.0}));
  CHECK(M(0, 0) == doctest::Approx(1.1));
  CHECK(M(0, 1) == doctest::Approx(0.05));
  CHECK(M(1, 0) == doctest::Approx(0.05));
  CHECK(M(1, 1) == doctest::Approx(0.025));

  // Relative-angle acrobot form M_rel = J^T M_abs J with phi_abs = J phi_rel.
  const auto ac = make_system(SystemKind::Acrobot);
  const double rel2 = pi / 2, abs1 = 0.4;
  Eigen::Matrix2d J;
  J << 1, 0, 1, 1;
  const Eigen::MatrixXd Mrel = J.transpose() * mass_matrix_gt(ac, vec({abs1, abs1 + rel2})) * J;
  const double m2 = 1, l1 = 1, l2 = 1;
  CHECK(Mrel(0, 1) == doctest::Approx(m2 * (l1 * l2 * std::cos(rel2) + l2 * l2)));
}

TEST_CASE("mass matrix equals the kinetic-energy Hessian of the point-mass model") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(-3, 3);
  for (auto kind : {SystemKind::Pendulum, SystemKind::CartPole, SystemKind::Acrobot}) {
    const auto spec = make_system(kind);
    for (int trial = 0; trial < 20; ++trial) {
      Eigen::VectorXd q(spec.dof()), qd(spec.dof());
      for (int i = 0; i < spec.dof(); ++i) {
        q(i) = U(rng);
        qd(i) = U(rng);
      }
      const double T = 0.5 * qd.dot(mass_matrix_gt(spec, q) * qd);
      CHECK(T == doctest::Approx(kinetic_from_positions(spec, q, qd)).epsilon(1e-6));
    }
  }
}

TEST_CASE("mass matrix is symmetric positive definite") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(-10, 10);
  for (auto kind : {SystemKind::Pendulum, SystemKind::CartPole, SystemKind::Acrobot}) {
    const auto spec = make_system(kind);
    for (int trial = 0; trial < 1000; ++trial) {
      Eigen::VectorXd q(spec.dof());
      for (int i = 0; i < spec.dof(); ++i) q(i) = U(rng);
      const Eigen::MatrixXd M = mass_matrix_gt(spec, q);
      REQUIRE((M - M.transpose()).cwiseAbs().maxCoeff() == 0.0);
      REQUIRE(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(M).eigenvalues().minCoeff() > 0.0);
    }
  }
}

TEST_CASE("potential examples") {
  const auto pend = make_system(SystemKind::Pendulum);
  CHECK(potential_gt(pend, vec({0.0})) == doctest::Approx(10.0));
  CHECK(potential_gt(pend, vec({pi})) == doctest::Approx(-10.0));
  const auto cp = make_system(SystemKind::CartPole);
  for (double r : {-1.0, 0.0, 2.5}) {
    CHECK(potential_gt(cp, vec({r, 0.0})) - potential_gt(cp, vec({r, pi})) == doctest::Approx(2 * 0.1 * 9.8 * 0.5));
  }
  // Gradient against central differences.
  const auto ac = make_system(SystemKind::Acrobot);
  const Eigen::VectorXd q = vec({0.7, -1.2});
  const Eigen::VectorXd g = potential_gradient_gt(ac, q);
  for (int k = 0; k < 2; ++k) {
    Eigen::VectorXd a = q, b = q;
    a(k) += 1e-6;
    b(k) -= 1e-6;
    CHECK(g(k) == doctest::Approx((potential_gt(ac, a) - potential_gt(ac, b)) / 2e-6).epsilon(1e-7));
  }
}

TEST_CASE("gt_rhs examples") {
  const auto pend = make_system(SystemKind::Pendulum);
  const Eigen::VectorXd rest = gt_rhs(pend, vec({-1.0, 0.0, 0.0}), vec({0.0}));
  CHECK(rest.cwiseAbs().maxCoeff() < 1e-12);

  const Eigen::VectorXd side = gt_rhs(pend, to_latent(pend, {vec({pi / 2}), vec({0.0})}), vec({0.0}));
  CHECK(side(2) == doctest::Approx(10.0));

  const Eigen::VectorXd pushed = gt_rhs(pend, to_latent(pend, {vec({0.0}), vec({0.0})}), vec({2.0}));
  CHECK(pushed(2) == doctest::Approx(2.0));

  CHECK_THROWS_AS(gt_rhs(pend, vec({std::nan(""), 0.0, 0.0}), vec({0.0})), IntegrationDiverged);
}

TEST_CASE("energy examples") {
  const auto pend = make_system(SystemKind::Pendulum);
  CHECK(total_energy_gt(pend, to_latent(pend, {vec({pi}), vec({0.0})})) == doctest::Approx(-10.0));
  CHECK(total_energy_gt(pend, to_latent(pend, {vec({pi}), vec({1.0})})) == doctest::Approx(-9.5));
  const auto ac = make_system(SystemKind::Acrobot);
  const Eigen::VectorXd q = vec({0.3, 2.0});
  CHECK(total_energy_gt(ac, to_latent(ac, {q, vec({0.0, 0.0})})) == doctest::Approx(potential_gt(ac, q)));
}

TEST_CASE("energy balance dE/dt = qdot^T g u holds for both Euler-Lagrange forms") {
  using C = std::complex<double>;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(-2, 2);
  for (auto form : {ElForm::Full, ElForm::Eq3}) {
    for (auto kind : {SystemKind::Pendulum, SystemKind::CartPole, SystemKind::Acrobot}) {
      SystemSpec spec = make_system(kind);
      spec.el_form = form;
      for (int trial = 0; trial < 50; ++trial) {
        Eigen::VectorXd q(spec.dof()), qd(spec.dof()), u(spec.control_dim());
        for (int i = 0; i < spec.dof(); ++i) {
          q(i) = 3 * U(rng);
          qd(i) = U(rng);
        }
        for (int i = 0; i < spec.control_dim(); ++i) u(i) = U(rng);
        const Eigen::VectorXd s = to_latent(spec, {q, qd});
        const Eigen::VectorXd ds = gt_rhs(spec, s, u);
        // Complex-step directional derivative of E along ds.
        const double h = 1e-30;
        const VecX<C> sc = s.cast<C>() + C(0, h) * ds.cast<C>();
        const double dE = energy_latent<C>(spec, sc).imag() / h;
        const double power = qd.dot(spec.actuation * u);
        CHECK(dE == doctest::Approx(power).epsilon(1e-8).scale(1.0));
      }
    }
  }
}

TEST_CASE("unit-circle blocks are tangent to the constraint") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> U(-3, 3);
  const auto spec = make_system(SystemKind::Acrobot);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::VectorXd s = to_latent(spec, {vec({U(rng), U(rng)}), vec({U(rng), U(rng)})});
    const Eigen::VectorXd ds = gt_rhs(spec, s, vec({U(rng), U(rng)}));
    for (int i = 0; i < 2; ++i) CHECK(std::abs(s(i) * ds(i) + s(2 + i) * ds(2 + i)) < 1e-14);
  }
}

TEST_CASE("full and abbreviated forms differ only for configuration-dependent mass") {
  SystemSpec a = make_system(SystemKind::CartPole);
  SystemSpec b = a;
  b.el_form = ElForm::Eq3;
  const Eigen::VectorXd s = to_latent(a, {vec({0.2, 0.9}), vec({0.5, 1.5})});
  CHECK((gt_rhs(a, s, vec({0, 0})) - gt_rhs(b, s, vec({0, 0}))).norm() > 1e-3);
  SystemSpec p = make_system(SystemKind::Pendulum);
  SystemSpec p3 = p;
  p3.el_form = ElForm::Eq3;
  const Eigen::VectorXd sp = to_latent(p, {vec({0.9}), vec({1.5})});
  CHECK((gt_rhs(p, sp, vec({0.3})) - gt_rhs(p3, sp, vec({0.3}))).norm() < 1e-14);
}
