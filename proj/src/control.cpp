#include "lgv/control.hpp"

#include "lgv/cavae.hpp"
#include "lgv/errors.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace lgv {

namespace {

void require_spd(const Eigen::MatrixXd& k, const char* name) {
  if (k.rows() != k.cols() || k.rows() == 0) throw ConfigError(std::string(name) + " must be a non-empty square matrix");
  if (!k.allFinite()) throw ConfigError(std::string(name) + " has non-finite entries");
  const double scale = std::max(1.0, k.cwiseAbs().maxCoeff());
  if ((k - k.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) throw ConfigError(std::string(name) + " must be symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(k);
  if (eig.eigenvalues().minCoeff() <= 0.0) throw ConfigError(std::string(name) + " must be positive definite");
}

double wrap_angle(double a) {
  constexpr double pi = std::numbers::pi;
  double w = std::remainder(a, 2.0 * pi);  // [-pi, pi]
  if (w <= -pi) w += 2.0 * pi;
  return w;
}

ad::Matrix row(const Eigen::VectorXd& v) { return v.transpose(); }

ad::Matrix image_row(const Image& img) {
  return Eigen::Map<const ad::Matrix>(img.data(), 1, img.size());
}

// Row-major [1 x r*c] into r x c.
Eigen::MatrixXd unflatten(const ad::Matrix& flat, int r, int c) {
  Eigen::MatrixXd m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = flat(0, i * c + j);
  return m;
}

}  // namespace

ControllerGains::ControllerGains(Eigen::MatrixXd kp, Eigen::MatrixXd kd) : kp_(std::move(kp)), kd_(std::move(kd)) {
  require_spd(kp_, "K_p");
  require_spd(kd_, "K_d");
  if (kp_.rows() != kd_.rows()) throw ConfigError("K_p and K_d dimensions differ");
}

ControllerGains ControllerGains::diagonal(int dof, double kp, double kd) {
  return ControllerGains(kp * Eigen::MatrixXd::Identity(dof, dof), kd * Eigen::MatrixXd::Identity(dof, dof));
}

Eigen::MatrixXd pseudo_actuation(const Eigen::MatrixXd& g) {
  if (g.rows() == 0 || g.rows() > g.cols()) {
    throw UnderactuatedError("input matrix " + std::to_string(g.rows()) + "x" + std::to_string(g.cols()) +
                             " cannot reach every generalized force");
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(g);
  const double smallest = svd.singularValues().minCoeff();
  if (!(smallest >= 1e-8)) {
    throw UnderactuatedError("input matrix is rank deficient (smallest singular value " + std::to_string(smallest) + ")");
  }
  const Eigen::MatrixXd ggt = g * g.transpose();
  return g.transpose() * ggt.llt().solve(Eigen::MatrixXd::Identity(g.rows(), g.rows()));
}

Eigen::VectorXd coordinate_error(const SystemSpec& spec, const Eigen::VectorXd& q, const Eigen::VectorXd& q_star) {
  if (q.size() != spec.dof() || q_star.size() != spec.dof()) throw ConfigError("coordinate size does not match the system");
  Eigen::VectorXd e = q - q_star;
  for (int i = 0; i < spec.dof(); ++i) {
    if (spec.coordinates[static_cast<std::size_t>(i)].kind == CoordKind::Rotational) e(i) = wrap_angle(e(i));
  }
  return e;
}

Eigen::VectorXd potential_shaping(const Eigen::MatrixXd& g, const Eigen::VectorXd& dv_dq, const Eigen::VectorXd& error,
                                  const Eigen::MatrixXd& kp) {
  return pseudo_actuation(g) * (dv_dq - kp * error);
}

Eigen::VectorXd damping_injection(const Eigen::MatrixXd& g, const Eigen::VectorXd& qdot, const Eigen::MatrixXd& kd) {
  return -(pseudo_actuation(g) * (kd * qdot));
}

Eigen::VectorXd energy_shaping_control(const Eigen::MatrixXd& g, const Eigen::VectorXd& dv_dq,
                                       const Eigen::VectorXd& error, const Eigen::VectorXd& qdot,
                                       const ControllerGains& gains) {
  return pseudo_actuation(g) * (dv_dq - gains.kp() * error - gains.kd() * qdot);
}

double shaped_energy(const Eigen::MatrixXd& mass, const Eigen::VectorXd& qdot, const Eigen::VectorXd& error,
                     const Eigen::MatrixXd& kp) {
  return 0.5 * qdot.dot(mass * qdot) + 0.5 * error.dot(kp * error);
}

ControllerGains ControllerGains::mass_scaled(const Eigen::MatrixXd& mass, double kp, double kd) {
  const Eigen::MatrixXd sym = 0.5 * (mass + mass.transpose());
  return ControllerGains(kp * sym, kd * sym);
}

ControllerGains default_gains(const SystemSpec& spec, const Eigen::VectorXd& q_star) {
  return ControllerGains::mass_scaled(mass_matrix_gt(spec, q_star), 10.0, 3.0);
}

OracleController::OracleController(SystemSpec spec, ControllerGains gains, Eigen::VectorXd q_star)
    : spec_(std::move(spec)), gains_(std::move(gains)), q_star_(std::move(q_star)) {
  if (gains_.dof() != spec_.dof() || q_star_.size() != spec_.dof()) throw ConfigError("controller dimensions do not match the system");
  pinv_ = pseudo_actuation(spec_.actuation);
}

ControlTerms OracleController::act(const GtState& x, int) {
  ControlTerms t;
  t.q = x.q;
  t.qdot = x.qdot;
  const Eigen::VectorXd e = coordinate_error(spec_, x.q, q_star_);
  t.u = pinv_ * (potential_gradient_gt(spec_, x.q) - gains_.kp() * e - gains_.kd() * x.qdot);
  t.potential = potential_gt(spec_, x.q);
  t.shaped_energy = shaped_energy(mass_matrix_gt(spec_, x.q), x.qdot, e, gains_.kp());
  return t;
}

RenderConfig model_render_config(const Model& model) {
  RenderConfig rc;
  rc.height = model.config().vae_config.height;
  rc.width = model.config().vae_config.width;
  rc.params = default_render_params(model.spec().kind);
  return rc;
}

Eigen::VectorXd coordinates_from_positions(const SystemSpec& spec, const Eigen::VectorXd& positions) {
  const int nt = spec.translational_count(), nr = spec.rotational_count();
  if (positions.size() != spec.position_width()) throw ConfigError("position width does not match the system");
  Eigen::VectorXd q(spec.dof());
  q.head(nt) = positions.head(nt);
  for (int j = 0; j < nr; ++j) q(nt + j) = std::atan2(positions(nt + nr + j), positions(nt + j));
  return q;
}

LearnedController::LearnedController(const Model& model, ControllerGains gains, const std::vector<Image>& goal_image,
                                     RenderConfig render)
    : model_(&model), dynamics_(model.lagrangian()), gains_(std::move(gains)), render_(std::move(render)) {
  if (!dynamics_) throw ConfigError("energy-based control needs Lagrangian dynamics");
  if (gains_.dof() != model.spec().dof()) throw ConfigError("gain dimensions do not match the system");
  q_star_ = coordinates_from_positions(model.spec(), encode(goal_image));
}

Eigen::VectorXd LearnedController::encode(const std::vector<Image>& frame) const {
  if (static_cast<int>(frame.size()) != model_->spec().n_bodies) throw ConfigError("frame body count does not match the system");
  ad::Tape tape;
  tape.set_frozen(true);
  std::vector<ad::Var> bodies;
  for (const auto& img : frame) bodies.push_back(tape.constant(image_row(img)));
  const Posterior post = model_->vae().encode(tape, bodies);
  return posterior_means(model_->spec(), post).value().row(0).transpose();
}

std::vector<Image> LearnedController::decode(const Eigen::VectorXd& positions) const {
  ad::Tape tape;
  tape.set_frozen(true);
  const auto out = model_->vae().decode(tape, tape.constant(row(positions)));
  std::vector<Image> images;
  for (const auto& body : out) {
    images.push_back(Eigen::Map<const Image>(body.value().data(), render_.height, render_.width));
  }
  return images;
}

ControlTerms LearnedController::act(const GtState& x, int step) {
  const SystemSpec& spec = model_->spec();
  const Eigen::VectorXd pos = encode(render(spec, x.q, render_));
  // Static first frame: the previous frame is the current one.
  const Eigen::VectorXd prev = step == 0 || last_positions_.size() == 0 ? pos : last_positions_;
  last_positions_ = pos;

  ControlTerms t;
  t.q = coordinates_from_positions(spec, pos);
  t.qdot = estimate_velocity(spec, prev, pos, model_->config().dt);

  ad::Tape tape;
  tape.set_frozen(true);
  const ad::Var p = tape.constant(row(pos));
  const int m = spec.dof(), k = spec.control_dim();
  const Eigen::VectorXd dv = dynamics_->potential_gradient(tape, p).value().row(0).transpose();
  const Eigen::MatrixXd g = unflatten(dynamics_->input_matrix(tape, p).value(), m, k);
  const Eigen::MatrixXd mass = unflatten(dynamics_->mass_matrix(tape, p).value(), m, m);
  const Eigen::VectorXd e = coordinate_error(spec, t.q, q_star_);
  t.u = energy_shaping_control(g, dv, e, t.qdot, gains_);
  t.potential = dynamics_->potential(tape, p).value()(0, 0);
  t.shaped_energy = shaped_energy(mass, t.qdot, e, gains_.kp());
  return t;
}

OdeField make_plant(const SystemSpec& spec) {
  return OdeField{2 * spec.dof(), spec.control_dim(),
                  [spec](const Eigen::VectorXd& x, const Eigen::VectorXd& u) { return gt_rhs_q(spec, x, u); }};
}

Episode closed_loop(const OdeField& plant, const SystemSpec& spec, Controller& controller, const GtState& x0,
                    const Eigen::VectorXd& q_goal, const ClosedLoopConfig& config) {
  const int m = spec.dof();
  if (config.steps < 1 || config.substeps < 1) throw ConfigError("closed loop needs steps >= 1 and substeps >= 1");
  if (!(config.dt > 0.0)) throw ConfigError("closed loop needs dt > 0");
  if (x0.q.size() != m || x0.qdot.size() != m || q_goal.size() != m) throw ConfigError("state size does not match the system");
  if (plant.state_dim != 2 * m || plant.control_dim != spec.control_dim()) throw ConfigError("plant dimensions do not match the system");
  if (!config.zero_order_hold && !controller.stateless()) throw ConfigError("continuous feedback needs a stateless controller");

  auto saturate = [&](const Eigen::VectorXd& u) {
    return config.saturation > 0.0 ? Eigen::VectorXd(u.cwiseMax(-config.saturation).cwiseMin(config.saturation)) : u;
  };
  // Continuous feedback: the plant sees the law at every stage.
  const OdeField closed{2 * m, spec.control_dim(), [&](const Eigen::VectorXd& s, const Eigen::VectorXd&) {
                          const Eigen::VectorXd u = saturate(controller.act(GtState{s.head(m), s.tail(m)}, 0).u);
                          return plant(s, u);
                        }};

  Episode ep;
  Eigen::VectorXd x(2 * m);
  x << x0.q, x0.qdot;
  const double h = config.dt / config.substeps;
  for (int t = 0; t <= config.steps; ++t) {
    const GtState state{x.head(m), x.tail(m)};
    ControlTerms terms = controller.act(state, t);
    EpisodeStep rec;
    rec.step = t;
    rec.q = state.q;
    rec.qdot = state.qdot;
    rec.u = saturate(terms.u);
    rec.saturated = (rec.u - terms.u).cwiseAbs().maxCoeff() > 0.0;
    rec.potential = terms.potential;
    rec.shaped_energy = terms.shaped_energy;
    rec.goal_distance = coordinate_error(spec, state.q, q_goal).norm();
    if (t < config.steps) {
      if (rec.saturated) ++ep.saturated_steps;
      for (int s = 0; s < config.substeps; ++s) {
        const auto index = static_cast<std::size_t>(t * config.substeps + s + 1);
        x = config.zero_order_hold ? rk4_step(plant, x, rec.u, h, index) : rk4_step(closed, x, rec.u, h, index);
      }
    }
    ep.steps.push_back(std::move(rec));
  }
  ep.final_state = GtState{x.head(m), x.tail(m)};
  return ep;
}

void write_episode_csv(std::ostream& out, const SystemSpec& spec, const Episode& episode) {
  out << "step";
  for (const auto& c : spec.coordinates) out << ",q_" << c.name;
  for (const auto& c : spec.coordinates) out << ",qdot_" << c.name;
  for (int k = 0; k < spec.control_dim(); ++k) out << ",u_" << k;
  out << ",V_learned,E_shaped,goal_distance\n";
  out.precision(9);
  for (const auto& s : episode.steps) {
    out << s.step;
    for (Eigen::Index i = 0; i < s.q.size(); ++i) out << ',' << s.q(i);
    for (Eigen::Index i = 0; i < s.qdot.size(); ++i) out << ',' << s.qdot(i);
    for (Eigen::Index i = 0; i < s.u.size(); ++i) out << ',' << s.u(i);
    out << ',' << s.potential << ',' << s.shaped_energy << ',' << s.goal_distance << '\n';
  }
}

}  // namespace lgv
