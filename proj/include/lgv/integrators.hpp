// Fixed-step explicit solvers for s' = f(s, u) with u held constant.
//
// The step functions are templates over the state type so the same code
// integrates plain Eigen vectors (ground truth) and taped ad::Var batches
// (training through the solver).
#pragma once

#include "lgv/autodiff/tape.hpp"
#include "lgv/errors.hpp"

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace lgv {

enum class Solver { Euler, Rk4 };

std::string to_string(Solver s);
Solver solver_from_string(const std::string& name);

// Any state component beyond this magnitude aborts the rollout.
inline constexpr double kDivergenceBound = 1e6;

// Process-wide counts of executed steps per method.
struct StepCounters {
  std::atomic<std::uint64_t> euler{0};
  std::atomic<std::uint64_t> rk4{0};
  void reset() {
    euler = 0;
    rk4 = 0;
  }
};
StepCounters& step_counters();

// Vector field with declared dimensions, for plant models driven by
// feedback controllers.
struct OdeField {
  int state_dim = 0;
  int control_dim = 0;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&)> f;

  Eigen::VectorXd operator()(const Eigen::VectorXd& s, const Eigen::VectorXd& u) const { return f(s, u); }
};

template <typename State, typename Control>
struct Rollout {
  std::vector<State> states;  // s^0 .. s^T
  double dt = 0.0;
  Control u_const;
};

namespace detail {

inline void guard_values(const double* data, Eigen::Index n, std::size_t step) {
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::isfinite(data[i])) throw IntegrationDiverged(step, "non-finite state");
    if (std::abs(data[i]) > kDivergenceBound) throw IntegrationDiverged(step, "state exceeds divergence bound");
  }
}

template <typename Derived>
void guard(const Eigen::MatrixBase<Derived>& s, std::size_t step) {
  const auto& d = s.derived();
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    for (Eigen::Index j = 0; j < d.cols(); ++j) {
      const double x = d(i, j);
      guard_values(&x, 1, step);
    }
  }
}

inline void guard(double s, std::size_t step) { guard_values(&s, 1, step); }

inline void guard(const ad::Var& s, std::size_t step) { guard_values(s.value().data(), s.value().size(), step); }

inline void require_dt(double dt) {
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
}

}  // namespace detail

template <typename Field, typename State, typename Control>
State euler_step(const Field& f, const State& s, const Control& u, double dt, std::size_t step = 0) {
  detail::require_dt(dt);
  State next = s + dt * f(s, u);
  detail::guard(next, step);
  ++step_counters().euler;
  return next;
}

template <typename Field, typename State, typename Control>
State rk4_step(const Field& f, const State& s, const Control& u, double dt, std::size_t step = 0) {
  detail::require_dt(dt);
  const State k1 = f(s, u);
  const State k2 = f(State(s + (0.5 * dt) * k1), u);
  const State k3 = f(State(s + (0.5 * dt) * k2), u);
  const State k4 = f(State(s + dt * k3), u);
  State next = s + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  detail::guard(next, step);
  ++step_counters().rk4;
  return next;
}

template <typename Field, typename State, typename Control>
State step(Solver method, const Field& f, const State& s, const Control& u, double dt, std::size_t index = 0) {
  return method == Solver::Euler ? euler_step(f, s, u, dt, index) : rk4_step(f, s, u, dt, index);
}

// Integrates T steps from s0 with u held fixed (u' = 0).
template <typename Field, typename State, typename Control>
Rollout<State, Control> rollout(const Field& f, const State& s0, const Control& u, double dt, int T, Solver method) {
  if (T < 1) throw ConfigError("rollout needs T >= 1");
  detail::require_dt(dt);
  Rollout<State, Control> out{{}, dt, u};
  out.states.reserve(static_cast<std::size_t>(T) + 1);
  out.states.push_back(s0);
  for (int t = 0; t < T; ++t) {
    out.states.push_back(step(method, f, out.states.back(), u, dt, static_cast<std::size_t>(t) + 1));
  }
  return out;
}

}  // namespace lgv
