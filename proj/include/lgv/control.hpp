// Energy shaping plus damping injection for fully actuated systems, driven
// either by the analytic energies (oracle) or by a learned model that
// re-encodes rendered frames every step.
#pragma once

#include "lgv/dataset.hpp"
#include "lgv/dynamics_core.hpp"
#include "lgv/integrators.hpp"
#include "lgv/system_spec.hpp"
#include "lgv/training.hpp"

#include <Eigen/Dense>

#include <limits>
#include <ostream>
#include <vector>

namespace lgv {

// K_p and K_d, both symmetric positive definite (checked on construction).
class ControllerGains {
 public:
  ControllerGains(Eigen::MatrixXd kp, Eigen::MatrixXd kd);
  static ControllerGains diagonal(int dof, double kp, double kd);
  // kp * M and kd * M for a mass matrix M, giving every coordinate the same
  // closed-loop frequency near the goal.
  static ControllerGains mass_scaled(const Eigen::MatrixXd& mass, double kp, double kd);

  const Eigen::MatrixXd& kp() const { return kp_; }
  const Eigen::MatrixXd& kd() const { return kd_; }
  int dof() const { return static_cast<int>(kp_.rows()); }

 private:
  Eigen::MatrixXd kp_;
  Eigen::MatrixXd kd_;
};

// g^T (g g^T)^-1 for g [dof x control_dim]; throws UnderactuatedError when
// the smallest singular value of g is below 1e-8.
Eigen::MatrixXd pseudo_actuation(const Eigen::MatrixXd& g);

// q - q_star with rotational components wrapped to (-pi, pi].
Eigen::VectorXd coordinate_error(const SystemSpec& spec, const Eigen::VectorXd& q, const Eigen::VectorXd& q_star);

// beta = pinv(g) (dV/dq - K_p (q - q_star)).
Eigen::VectorXd potential_shaping(const Eigen::MatrixXd& g, const Eigen::VectorXd& dv_dq, const Eigen::VectorXd& error,
                                  const Eigen::MatrixXd& kp);
// v = -pinv(g) K_d qdot.
Eigen::VectorXd damping_injection(const Eigen::MatrixXd& g, const Eigen::VectorXd& qdot, const Eigen::MatrixXd& kd);
// The combined law pinv(g) (dV/dq - K_p (q - q_star) - K_d qdot) in one expression.
Eigen::VectorXd energy_shaping_control(const Eigen::MatrixXd& g, const Eigen::VectorXd& dv_dq,
                                       const Eigen::VectorXd& error, const Eigen::VectorXd& qdot,
                                       const ControllerGains& gains);
// 1/2 qdot^T M qdot + 1/2 e^T K_p e.
double shaped_energy(const Eigen::MatrixXd& mass, const Eigen::VectorXd& qdot, const Eigen::VectorXd& error,
                     const Eigen::MatrixXd& kp);

// Quantities the controller sees at one step, in its own coordinates.
struct ControlTerms {
  Eigen::VectorXd q;
  Eigen::VectorXd qdot;
  Eigen::VectorXd u;
  double potential = 0.0;
  double shaped_energy = 0.0;
};

class Controller {
 public:
  virtual ~Controller() = default;
  // Feedback from the true plant state at `step`; controllers that observe
  // through images render it first.
  virtual ControlTerms act(const GtState& x, int step) = 0;
  virtual const Eigen::VectorXd& goal() const = 0;
  // True when act depends on the state only, so the law can be evaluated
  // inside the integrator.
  virtual bool stateless() const { return false; }
};

class OracleController : public Controller {
 public:
  OracleController(SystemSpec spec, ControllerGains gains, Eigen::VectorXd q_star);
  ControlTerms act(const GtState& x, int step) override;
  const Eigen::VectorXd& goal() const override { return q_star_; }
  bool stateless() const override { return true; }

 private:
  SystemSpec spec_;
  ControllerGains gains_;
  Eigen::VectorXd q_star_;
  Eigen::MatrixXd pinv_;
};

// 10 M(q_star) and 3 M(q_star) from the analytic mass matrix.
ControllerGains default_gains(const SystemSpec& spec, const Eigen::VectorXd& q_star);

// Render configuration matching the frames `model` was trained on.
RenderConfig model_render_config(const Model& model);

// Learned V and g with coordinates encoded (posterior means) from the current
// frame and velocities estimated against the previous frame. The goal is the
// encoding of the goal image.
class LearnedController : public Controller {
 public:
  LearnedController(const Model& model, ControllerGains gains, const std::vector<Image>& goal_image,
                    RenderConfig render);
  ControlTerms act(const GtState& x, int step) override;
  const Eigen::VectorXd& goal() const override { return q_star_; }

  // Latent positions (posterior means) of a rendered frame.
  Eigen::VectorXd encode(const std::vector<Image>& frame) const;
  // Decoded images of latent positions, one per body.
  std::vector<Image> decode(const Eigen::VectorXd& positions) const;
  const Eigen::VectorXd& last_positions() const { return last_positions_; }

 private:
  const Model* model_;
  const LagrangianDynamics* dynamics_;
  ControllerGains gains_;
  RenderConfig render_;
  Eigen::VectorXd q_star_;
  Eigen::VectorXd last_positions_;
};

// Generalized coordinates (angles via atan2) of latent positions.
Eigen::VectorXd coordinates_from_positions(const SystemSpec& spec, const Eigen::VectorXd& positions);

// Ground-truth plant on x = (q, qdot).
OdeField make_plant(const SystemSpec& spec);

struct ClosedLoopConfig {
  double dt = 0.05;
  int steps = 500;
  int substeps = 1;         // RK4 steps per control interval (u held constant)
  double saturation = 0.0;  // |u_i| bound, <= 0 disables
  // Hold u over each interval (a simulator taking one input per frame). When
  // false the law is re-evaluated at every integrator stage, which needs a
  // stateless controller.
  bool zero_order_hold = true;
};

struct EpisodeStep {
  int step = 0;
  Eigen::VectorXd q;     // true plant coordinates
  Eigen::VectorXd qdot;
  Eigen::VectorXd u;     // applied input (after saturation)
  double potential = 0.0;      // V seen by the controller (learned or analytic)
  double shaped_energy = 0.0;  // in the controller's coordinates
  double goal_distance = 0.0;  // |coordinate_error(q, q_goal)| in true coordinates
  bool saturated = false;
};

struct Episode {
  std::vector<EpisodeStep> steps;  // 0..T; the input logged at T is computed but not applied
  GtState final_state;
  int saturated_steps = 0;
};

// Runs `config.steps` control intervals of the true plant from x0. `q_goal`
// (true coordinates) only feeds the goal-distance log.
Episode closed_loop(const OdeField& plant, const SystemSpec& spec, Controller& controller, const GtState& x0,
                    const Eigen::VectorXd& q_goal, const ClosedLoopConfig& config);

// Columns: step, q_<name>..., qdot_<name>..., u_<k>..., V_learned, E_shaped,
// goal_distance.
void write_episode_csv(std::ostream& out, const SystemSpec& spec, const Episode& episode);

}  // namespace lgv
