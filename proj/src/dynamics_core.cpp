#include "lgv/dynamics_core.hpp"

#include "lgv/errors.hpp"

namespace lgv {

namespace {

void require_finite(const Eigen::VectorXd& v, const char* what) {
  if (!v.allFinite()) throw IntegrationDiverged(0, std::string(what) + " has non-finite entries");
}

void require_length(const Eigen::VectorXd& v, Eigen::Index n, const char* what) {
  if (v.size() != n) {
    throw ConfigError(std::string(what) + " has length " + std::to_string(v.size()) + ", expected " +
                      std::to_string(n));
  }
}

}  // namespace

Eigen::VectorXd latent_positions(const SystemSpec& spec, const Eigen::VectorXd& q) {
  require_length(q, spec.dof(), "q");
  const int mr = spec.translational_count();
  const int mt = spec.rotational_count();
  Eigen::VectorXd pos(spec.position_width());
  pos.head(mr) = q.head(mr);
  for (int i = 0; i < mt; ++i) {
    pos(mr + i) = std::cos(q(mr + i));
    pos(mr + mt + i) = std::sin(q(mr + i));
  }
  return pos;
}

Eigen::VectorXd to_latent(const SystemSpec& spec, const GtState& x) {
  require_length(x.qdot, spec.dof(), "qdot");
  Eigen::VectorXd s(spec.state_width());
  s << latent_positions(spec, x.q), x.qdot;
  return s;
}

GtState from_latent(const SystemSpec& spec, const Eigen::VectorXd& s) {
  require_length(s, spec.state_width(), "latent state");
  const int mr = spec.translational_count();
  const int mt = spec.rotational_count();
  GtState x{Eigen::VectorXd(spec.dof()), s.tail(spec.dof())};
  x.q.head(mr) = s.head(mr);
  for (int i = 0; i < mt; ++i) x.q(mr + i) = std::atan2(s(mr + mt + i), s(mr + i));
  return x;
}

Eigen::MatrixXd mass_matrix_gt(const SystemSpec& spec, const Eigen::VectorXd& q) {
  return mass_matrix_latent<double>(spec, latent_positions(spec, q));
}

double potential_gt(const SystemSpec& spec, const Eigen::VectorXd& q) {
  return potential_latent<double>(spec, latent_positions(spec, q));
}

Eigen::VectorXd potential_gradient_gt(const SystemSpec& spec, const Eigen::VectorXd& q) {
  return potential_gradient_latent<double>(spec, latent_positions(spec, q));
}

Eigen::VectorXd gt_rhs(const SystemSpec& spec, const Eigen::VectorXd& s, const Eigen::VectorXd& u) {
  require_length(s, spec.state_width(), "latent state");
  require_length(u, spec.control_dim(), "control");
  require_finite(s, "latent state");
  const int mr = spec.translational_count();
  const int mt = spec.rotational_count();
  const int w = spec.position_width();
  const int m = spec.dof();
  const Eigen::VectorXd pos = s.head(w);
  const Eigen::VectorXd qdot = s.tail(m);
  Eigen::VectorXd ds(s.size());
  ds.head(mr) = qdot.head(mr);
  for (int i = 0; i < mt; ++i) {
    const double w_i = qdot(mr + i);
    ds(mr + i) = -s(mr + mt + i) * w_i;
    ds(mr + mt + i) = s(mr + i) * w_i;
  }
  ds.tail(m) = acceleration_latent<double>(spec, pos, qdot, u);
  return ds;
}

Eigen::VectorXd gt_rhs_q(const SystemSpec& spec, const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
  const int m = spec.dof();
  require_length(x, 2 * m, "(q, qdot)");
  require_length(u, spec.control_dim(), "control");
  require_finite(x, "(q, qdot)");
  Eigen::VectorXd dx(2 * m);
  dx.head(m) = x.tail(m);
  dx.tail(m) = acceleration_latent<double>(spec, latent_positions(spec, x.head(m)), Eigen::VectorXd(x.tail(m)), u);
  return dx;
}

double total_energy_gt(const SystemSpec& spec, const Eigen::VectorXd& s) {
  require_length(s, spec.state_width(), "latent state");
  return energy_latent<double>(spec, s);
}

double total_energy_q(const SystemSpec& spec, const GtState& x) { return total_energy_gt(spec, to_latent(spec, x)); }

}  // namespace lgv
