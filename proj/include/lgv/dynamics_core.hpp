// Analytic Lagrangian models of the built-in systems.
//
// Angles follow phi = 0 upright; a body at angle phi points along
// (sin phi, cos phi) in the plane, so V = m g y is maximal at phi = 0. Mass
// points sit at the link ends. Acrobot coordinates are absolute link angles.
//
// The templated kernels take positions in latent form (r..., cos phi...,
// sin phi...) so they can be evaluated with complex scalars for exact
// directional derivatives.
#pragma once

#include "lgv/system_spec.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace lgv {

template <typename S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <typename S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

struct GtState {
  Eigen::VectorXd q;
  Eigen::VectorXd qdot;
};

namespace detail {

template <typename S>
struct Trig {
  S c;
  S s;
};

template <typename S>
Trig<S> angle(const SystemSpec& spec, const VecX<S>& pos, int rot_index) {
  const int mr = spec.translational_count();
  const int mt = spec.rotational_count();
  return {pos(mr + rot_index), pos(mr + mt + rot_index)};
}

}  // namespace detail

// M(q) from latent positions. `dM` (optional, dof entries) receives dM/dq_k.
template <typename S>
MatX<S> mass_matrix_latent(const SystemSpec& spec, const VecX<S>& pos, std::vector<MatX<S>>* dM = nullptr) {
  const auto& p = spec.phys;
  const int m = spec.dof();
  MatX<S> M = MatX<S>::Zero(m, m);
  if (dM) dM->assign(static_cast<std::size_t>(m), MatX<S>::Zero(m, m));
  switch (spec.kind) {
    case SystemKind::Pendulum:
      M(0, 0) = S(p.masses[0] * p.lengths[0] * p.lengths[0]);
      break;
    case SystemKind::CartPole: {
      const double mc = p.masses[0], mp = p.masses[1], l = p.lengths[1];
      const auto t = detail::angle(spec, pos, 0);
      M(0, 0) = S(mc + mp);
      M(0, 1) = M(1, 0) = S(mp * l) * t.c;
      M(1, 1) = S(mp * l * l);
      if (dM) (*dM)[1](0, 1) = (*dM)[1](1, 0) = -S(mp * l) * t.s;
      break;
    }
    case SystemKind::Acrobot: {
      const double m1 = p.masses[0], m2 = p.masses[1], l1 = p.lengths[0], l2 = p.lengths[1];
      const auto a = detail::angle(spec, pos, 0);
      const auto b = detail::angle(spec, pos, 1);
      const S cos12 = a.c * b.c + a.s * b.s;
      const S sin12 = a.s * b.c - a.c * b.s;
      M(0, 0) = S((m1 + m2) * l1 * l1);
      M(0, 1) = M(1, 0) = S(m2 * l1 * l2) * cos12;
      M(1, 1) = S(m2 * l2 * l2);
      if (dM) {
        (*dM)[0](0, 1) = (*dM)[0](1, 0) = -S(m2 * l1 * l2) * sin12;
        (*dM)[1](0, 1) = (*dM)[1](1, 0) = S(m2 * l1 * l2) * sin12;
      }
      break;
    }
  }
  return M;
}

template <typename S>
S potential_latent(const SystemSpec& spec, const VecX<S>& pos) {
  const auto& p = spec.phys;
  switch (spec.kind) {
    case SystemKind::Pendulum:
      return S(p.masses[0] * p.gravity * p.lengths[0]) * detail::angle(spec, pos, 0).c;
    case SystemKind::CartPole:
      return S(p.masses[1] * p.gravity * p.lengths[1]) * detail::angle(spec, pos, 0).c;
    case SystemKind::Acrobot: {
      const double m1 = p.masses[0], m2 = p.masses[1], l1 = p.lengths[0], l2 = p.lengths[1];
      return S((m1 + m2) * p.gravity * l1) * detail::angle(spec, pos, 0).c +
             S(m2 * p.gravity * l2) * detail::angle(spec, pos, 1).c;
    }
  }
  return S(0);
}

// dV/dq (generalized coordinates, not latent components).
template <typename S>
VecX<S> potential_gradient_latent(const SystemSpec& spec, const VecX<S>& pos) {
  const auto& p = spec.phys;
  VecX<S> g = VecX<S>::Zero(spec.dof());
  switch (spec.kind) {
    case SystemKind::Pendulum:
      g(0) = -S(p.masses[0] * p.gravity * p.lengths[0]) * detail::angle(spec, pos, 0).s;
      break;
    case SystemKind::CartPole:
      g(1) = -S(p.masses[1] * p.gravity * p.lengths[1]) * detail::angle(spec, pos, 0).s;
      break;
    case SystemKind::Acrobot: {
      const double m1 = p.masses[0], m2 = p.masses[1], l1 = p.lengths[0], l2 = p.lengths[1];
      g(0) = -S((m1 + m2) * p.gravity * l1) * detail::angle(spec, pos, 0).s;
      g(1) = -S(m2 * p.gravity * l2) * detail::angle(spec, pos, 1).s;
      break;
    }
  }
  return g;
}

// Generalized acceleration from the Euler-Lagrange equation selected by
// spec.el_form.
template <typename S>
VecX<S> acceleration_latent(const SystemSpec& spec, const VecX<S>& pos, const VecX<S>& qdot, const VecX<S>& u) {
  std::vector<MatX<S>> dM;
  const MatX<S> M = mass_matrix_latent(spec, pos, &dM);
  const int m = spec.dof();
  MatX<S> Mdot = MatX<S>::Zero(m, m);
  for (int k = 0; k < m; ++k) Mdot += dM[static_cast<std::size_t>(k)] * qdot(k);
  VecX<S> rhs = -potential_gradient_latent(spec, pos) + spec.actuation.cast<S>() * u;
  if (spec.el_form == ElForm::Full) {
    rhs -= Mdot * qdot;
    for (int k = 0; k < m; ++k) rhs(k) += S(0.5) * qdot.cwiseProduct(dM[static_cast<std::size_t>(k)] * qdot).sum();
  } else {
    rhs -= S(0.5) * (Mdot * qdot);
  }
  return M.partialPivLu().solve(rhs);
}

template <typename S>
S energy_latent(const SystemSpec& spec, const VecX<S>& s) {
  const int w = spec.position_width();
  const VecX<S> pos = s.head(w);
  const VecX<S> qdot = s.tail(spec.dof());
  return S(0.5) * qdot.cwiseProduct(mass_matrix_latent(spec, pos) * qdot).sum() + potential_latent(spec, pos);
}

// Latent position block (r, cos phi, sin phi) of generalized coordinates q.
Eigen::VectorXd latent_positions(const SystemSpec& spec, const Eigen::VectorXd& q);
// Full latent state (r, cos phi, sin phi, rdot, phidot).
Eigen::VectorXd to_latent(const SystemSpec& spec, const GtState& x);
// Inverse of to_latent with angles recovered in (-pi, pi].
GtState from_latent(const SystemSpec& spec, const Eigen::VectorXd& s);

Eigen::MatrixXd mass_matrix_gt(const SystemSpec& spec, const Eigen::VectorXd& q);
double potential_gt(const SystemSpec& spec, const Eigen::VectorXd& q);
Eigen::VectorXd potential_gradient_gt(const SystemSpec& spec, const Eigen::VectorXd& q);

// d/dt of a latent state. Throws IntegrationDiverged(0, ...) on non-finite input.
Eigen::VectorXd gt_rhs(const SystemSpec& spec, const Eigen::VectorXd& s, const Eigen::VectorXd& u);
// d/dt of (q, qdot) stacked, the form used for ground-truth simulation.
Eigen::VectorXd gt_rhs_q(const SystemSpec& spec, const Eigen::VectorXd& x, const Eigen::VectorXd& u);

double total_energy_gt(const SystemSpec& spec, const Eigen::VectorXd& s);
double total_energy_q(const SystemSpec& spec, const GtState& x);

}  // namespace lgv
