// Gaussian and von Mises latent distributions with KL terms to their priors
// (standard normal, uniform on the circle) and reparametrized sampling.
#pragma once

#include "lgv/autodiff/ops.hpp"

#include <Eigen/Dense>

#include <random>
#include <utility>

namespace lgv {

using Rng = std::mt19937_64;

struct VonMisesParam {
  Eigen::Vector2d mu{1.0, 0.0};  // (cos mu, sin mu)
  double kappa = 0.0;
};

struct GaussianParam {
  double mean = 0.0;
  double log_var = 0.0;
};

struct BesselValues {
  double ratio;   // I1(kappa) / I0(kappa)
  double log_i0;  // log I0(kappa)
};

// Power series below kappa = 15, asymptotic expansion above.
BesselValues bessel_ratio_and_log_i0(double kappa);
// d/dkappa of I1/I0, equal to 1 - ratio/kappa - ratio^2.
double bessel_ratio_derivative(double kappa);

double vm_kl_to_uniform(double kappa);
double gauss_kl_to_std_normal(const GaussianParam& p);

// Unit direction and the norm of (alpha, beta); throws
// DegenerateDirectionError for the zero vector.
std::pair<Eigen::Vector2d, double> normalize_direction(double alpha, double beta);

// Zero-centered von Mises angle by Best-Fisher rejection.
double vm_sample_angle_rejection(double kappa, Rng& rng);
// Zero-centered von Mises angle F^{-1}(u; kappa) in (-pi, pi). Smooth in
// kappa for fixed u, which makes it the reparametrized sampler.
double vm_inverse_cdf(double kappa, double u);
// d theta / d kappa of vm_inverse_cdf at fixed u, by implicit differentiation.
double vm_inverse_cdf_dkappa(double kappa, double theta);
// CDF of the zero-centered von Mises on (-pi, pi).
double vm_cdf(double kappa, double theta);

// (cos theta, sin theta) for theta ~ vM(mu, kappa).
Eigen::Vector2d vm_sample(const VonMisesParam& p, Rng& rng);
double gauss_sample(const GaussianParam& p, Rng& rng);

namespace ad {

// Elementwise kappa I1/I0 - log I0 of a kappa matrix.
Var vm_kl(Var kappa);
// Elementwise 1/2 (exp(lv) + mean^2 - 1 - lv).
Var gauss_kl(Var mean, Var log_var);
// Rows of (alpha, beta) [B x 2] -> unit directions [B x 2] and norms [B x 1].
std::pair<Var, Var> normalize_direction(Var alpha_beta);
// Reparametrized vM draw: direction [B x 2], kappa [B x 1] and uniforms
// [B x 1] in (0, 1) -> (cos theta, sin theta) [B x 2].
Var vm_sample(Var direction, Var kappa, const Matrix& uniforms);
// mean + exp(lv / 2) * eps.
Var gauss_sample(Var mean, Var log_var, const Matrix& eps);

}  // namespace ad

}  // namespace lgv
