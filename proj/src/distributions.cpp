#include "lgv/distributions.hpp"

#include "lgv/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace lgv {

namespace {

using std::numbers::pi;

constexpr double kSeriesLimit = 15.0;

void require_kappa(double kappa) {
  if (!(kappa >= 0.0) || !std::isfinite(kappa)) {
    throw std::domain_error("von Mises concentration must be finite and >= 0, got " + std::to_string(kappa));
  }
}

// 8-point Gauss-Legendre nodes and weights on [-1, 1].
constexpr std::array<double, 8> kNodes = {-0.9602898564975363, -0.7966664774136267, -0.5255324099163290,
                                          -0.1834346424956498, 0.1834346424956498,  0.5255324099163290,
                                          0.7966664774136267,  0.9602898564975363};
constexpr std::array<double, 8> kWeights = {0.1012285362903763, 0.2223810344533745, 0.3137066458778873,
                                            0.3626837833783620, 0.3626837833783620, 0.3137066458778873,
                                            0.2223810344533745, 0.1012285362903763};

// Panels of at most half the density's angular scale, capped at 16.
int panel_count(double kappa, double width) {
  const double scale = 1.0 / std::sqrt(std::max(kappa, 1.0));
  return std::clamp(static_cast<int>(std::ceil(2.0 * width / scale)), 2, 16);
}

template <typename F>
double integrate(const F& f, double a, double b, int panels) {
  if (b <= a) return 0.0;
  const double h = (b - a) / panels;
  double total = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double mid = a + (p + 0.5) * h;
    double s = 0.0;
    for (std::size_t k = 0; k < kNodes.size(); ++k) s += kWeights[k] * f(mid + 0.5 * h * kNodes[k]);
    total += 0.5 * h * s;
  }
  return total;
}

// Beyond this |t| the unnormalized density exp(-2 kappa sin^2(t/2)) is below e^-72.
double tail_cutoff(double kappa) { return kappa > 0.0 ? std::min(pi, 12.0 / std::sqrt(kappa)) : pi; }

double unnormalized_density(double kappa, double t) {
  const double h = std::sin(0.5 * t);
  return std::exp(-2.0 * kappa * h * h);
}

// Integral of the unnormalized density over [0, a], a in [0, pi].
double half_mass(double kappa, double a) {
  const double upper = std::min(a, tail_cutoff(kappa));
  return integrate([kappa](double t) { return unnormalized_density(kappa, t); }, 0.0, upper,
                   panel_count(kappa, upper));
}

// Normalizer and mean resultant length, memoized for repeated kappa.
struct KappaConstants {
  double total;
  double mean_cos;
};

KappaConstants kappa_constants(double kappa) {
  thread_local double cached_kappa = -1.0;
  thread_local KappaConstants cached{0.0, 0.0};
  if (kappa != cached_kappa) {
    cached = {2.0 * half_mass(kappa, pi), bessel_ratio_and_log_i0(kappa).ratio};
    cached_kappa = kappa;
  }
  return cached;
}

// Single 8-point Gauss-Legendre panel of the unnormalized density on [a, b].
double panel(double kappa, double a, double b) {
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  double s = 0.0;
  for (std::size_t k = 0; k < kNodes.size(); ++k) s += kWeights[k] * unnormalized_density(kappa, mid + half * kNodes[k]);
  return half * s;
}

// Standard normal quantile for p in [0.5, 1) (Acklam's rational
// approximation, relative error below 1.2e-9); only seeds a Newton solve.
double normal_quantile(double p) {
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  if (p < 0.97575) {
    const double q = p - 0.5;
    const double r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  }
  const double q = std::sqrt(-2.0 * std::log(1.0 - p));
  return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
         ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
}

}  // namespace

BesselValues bessel_ratio_and_log_i0(double kappa) {
  require_kappa(kappa);
  if (kappa < kSeriesLimit) {
    const double q = 0.25 * kappa * kappa;
    double t0 = 1.0, s0 = 1.0;
    double t1 = 1.0, s1 = 1.0;
    for (int k = 1; k < 200; ++k) {
      t0 *= q / (static_cast<double>(k) * k);
      t1 *= q / (static_cast<double>(k) * (k + 1));
      s0 += t0;
      s1 += t1;
      if (t0 < 1e-17 * s0 && t1 < 1e-17 * s1) break;
    }
    return {0.5 * kappa * s1 / s0, std::log(s0)};
  }
  // I_nu(k) ~ e^k / sqrt(2 pi k) * sum_j (-1)^j a_j(nu) / k^j.
  auto series = [kappa](double nu) {
    const double mu = 4.0 * nu * nu;
    double term = 1.0, sum = 1.0, last = 1.0;
    for (int j = 1; j < 60; ++j) {
      const double odd = 2.0 * j - 1.0;
      term *= -(mu - odd * odd) / (j * 8.0 * kappa);
      if (std::abs(term) > std::abs(last)) break;
      sum += term;
      last = term;
      if (std::abs(term) < 1e-17 * std::abs(sum)) break;
    }
    return sum;
  };
  const double s0 = series(0.0);
  const double s1 = series(1.0);
  return {s1 / s0, kappa - 0.5 * std::log(2.0 * pi * kappa) + std::log(s0)};
}

double bessel_ratio_derivative(double kappa) {
  require_kappa(kappa);
  if (kappa < 1e-6) return 0.5 - 3.0 * kappa * kappa / 16.0;
  const double a = bessel_ratio_and_log_i0(kappa).ratio;
  return 1.0 - a / kappa - a * a;
}

double vm_kl_to_uniform(double kappa) {
  const auto b = bessel_ratio_and_log_i0(kappa);
  return std::max(0.0, kappa * b.ratio - b.log_i0);
}

double gauss_kl_to_std_normal(const GaussianParam& p) {
  const double var = std::exp(p.log_var);
  return 0.5 * (var + p.mean * p.mean - 1.0 - p.log_var);
}

std::pair<Eigen::Vector2d, double> normalize_direction(double alpha, double beta) {
  const double n = std::hypot(alpha, beta);
  if (!(n > 0.0)) throw DegenerateDirectionError("cannot normalize a zero (alpha, beta) direction");
  return {Eigen::Vector2d(alpha / n, beta / n), n};
}

double vm_sample_angle_rejection(double kappa, Rng& rng) {
  require_kappa(kappa);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  if (kappa < 1e-8) return pi * (2.0 * U(rng) - 1.0);
  const double tau = 1.0 + std::sqrt(1.0 + 4.0 * kappa * kappa);
  const double rho = (tau - std::sqrt(2.0 * tau)) / (2.0 * kappa);
  const double r = (1.0 + rho * rho) / (2.0 * rho);
  for (;;) {
    const double z = std::cos(pi * U(rng));
    const double f = (1.0 + r * z) / (r + z);
    const double c = kappa * (r - f);
    const double u2 = U(rng);
    const double u3 = U(rng);
    if (c * (2.0 - c) - u2 > 0.0 || std::log(c / u2) + 1.0 - c >= 0.0) {
      const double theta = std::acos(std::clamp(f, -1.0, 1.0));
      return u3 < 0.5 ? -theta : theta;
    }
  }
}

double vm_cdf(double kappa, double theta) {
  require_kappa(kappa);
  const double a = std::min(std::abs(theta), pi);
  const double frac = half_mass(kappa, a) / kappa_constants(kappa).total;
  return theta < 0 ? 0.5 - frac : 0.5 + frac;
}

double vm_inverse_cdf(double kappa, double u) {
  require_kappa(kappa);
  if (!(u > 0.0 && u < 1.0)) throw std::domain_error("vm_inverse_cdf needs u in (0, 1)");
  const double total = kappa_constants(kappa).total;
  const double target = std::abs(u - 0.5) * total;
  double lo = 0.0;
  double hi = tail_cutoff(kappa);
  // Under x = 2 sqrt(kappa) sin(t/2) the density is close to a standard
  // normal in x once kappa is moderate.
  double a = 2.0 * pi * std::abs(u - 0.5);
  if (kappa > 2.0) {
    const double x = normal_quantile(std::max(u, 1.0 - u)) / (2.0 * std::sqrt(kappa));
    a = x < 1.0 ? 2.0 * std::asin(x) : pi;
  }
  a = std::clamp(a, lo, hi);
  // Step lengths beyond `local` trigger a full re-integration instead of a
  // single-panel increment.
  const double local = kappa > 1.0 ? 0.5 / std::sqrt(kappa) : 0.5;
  double mass = half_mass(kappa, a);
  for (int it = 0; it < 100; ++it) {
    const double r = mass - target;
    const double d = unnormalized_density(kappa, a);
    if (d > 0 && std::abs(r) <= 1e-15 * d * std::max(1.0, a)) break;
    if (r > 0) {
      hi = a;
    } else {
      lo = a;
    }
    if (hi - lo <= 1e-15) break;
    double next = d > 0 ? a - r / d : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - a) <= local && next < tail_cutoff(kappa)) {
      mass += std::copysign(panel(kappa, std::min(a, next), std::max(a, next)), next - a);
    } else {
      mass = half_mass(kappa, next);
    }
    a = next;
  }
  return u < 0.5 ? -a : a;
}

double vm_inverse_cdf_dkappa(double kappa, double theta) {
  require_kappa(kappa);
  const double a = std::abs(theta);
  const double mean_cos = kappa_constants(kappa).mean_cos;
  const double cos_a = std::cos(a);
  // Integrand is f(t)/f(theta) * (cos t - E[cos]); the exponent is capped
  // since arguments past the cap only arise beyond the tail cutoff.
  const double upper = std::min(a, tail_cutoff(kappa));
  const double integral = integrate(
      [&](double t) {
        const double c = std::cos(t);
        return std::exp(std::min(700.0, kappa * (c - cos_a))) * (c - mean_cos);
      },
      0.0, upper, panel_count(kappa, upper));
  return theta < 0 ? integral : -integral;
}

Eigen::Vector2d vm_sample(const VonMisesParam& p, Rng& rng) {
  const double theta = vm_sample_angle_rejection(p.kappa, rng);
  const double c = std::cos(theta), s = std::sin(theta);
  return {p.mu(0) * c - p.mu(1) * s, p.mu(1) * c + p.mu(0) * s};
}

double gauss_sample(const GaussianParam& p, Rng& rng) {
  std::normal_distribution<double> N(0.0, 1.0);
  return p.mean + std::exp(0.5 * p.log_var) * N(rng);
}

namespace ad {

Var vm_kl(Var kappa) {
  const Matrix& k = kappa.value();
  Matrix value(k.rows(), k.cols());
  Matrix slope(k.rows(), k.cols());
  for (Index i = 0; i < k.size(); ++i) {
    const double x = k.data()[i];
    value.data()[i] = vm_kl_to_uniform(x);
    slope.data()[i] = x * bessel_ratio_derivative(x);
  }
  return kappa.tape().record(std::move(value), {kappa}, [kappa, slope](Tape& t, int self) {
    t.accumulate(kappa, t.grad(self).cwiseProduct(slope));
  });
}

Var gauss_kl(Var mean, Var log_var) {
  return scale(shift(sub(add(exp(log_var), square(mean)), log_var), -1.0), 0.5);
}

std::pair<Var, Var> normalize_direction(Var alpha_beta) {
  Var norm = sqrt(row_sum(square(alpha_beta)));
  if (!(norm.value().minCoeff() > 1e-12)) {
    throw DegenerateDirectionError("cannot normalize a zero (alpha, beta) direction");
  }
  return {div(alpha_beta, norm), norm};
}

Var vm_sample(Var direction, Var kappa, const Matrix& uniforms) {
  const Matrix& k = kappa.value();
  if (k.cols() != 1 || uniforms.rows() != k.rows() || uniforms.cols() != 1 || direction.rows() != k.rows() ||
      direction.cols() != 2) {
    throw std::invalid_argument("vm_sample: expected direction [B x 2], kappa and uniforms [B x 1]");
  }
  Matrix theta(k.rows(), 1);
  Matrix slope(k.rows(), 1);
  for (Index b = 0; b < k.rows(); ++b) {
    theta(b, 0) = vm_inverse_cdf(k(b, 0), uniforms(b, 0));
    slope(b, 0) = vm_inverse_cdf_dkappa(k(b, 0), theta(b, 0));
  }
  Var angle = kappa.tape().record(std::move(theta), {kappa}, [kappa, slope](Tape& t, int self) {
    t.accumulate(kappa, t.grad(self).cwiseProduct(slope));
  });
  Var c = cos(angle), s = sin(angle);
  Var mc = col(direction, 0), ms = col(direction, 1);
  return hcat({sub(mul(mc, c), mul(ms, s)), add(mul(ms, c), mul(mc, s))});
}

Var gauss_sample(Var mean, Var log_var, const Matrix& eps) {
  return add(mean, mul(exp(scale(log_var, 0.5)), mean.tape().constant(eps)));
}

}  // namespace ad

}  // namespace lgv
