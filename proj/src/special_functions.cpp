#include "mktcop/special_functions.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "mktcop/quadrature.hpp"

namespace mktcop {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Negative halves of the 6-, 12- and 20-point Gauss-Legendre rules.
struct HalfRule {
  std::array<double, 10> x{};
  std::array<double, 10> w{};
  int size = 0;
};

const std::array<HalfRule, 3>& bvn_rules() {
  static const std::array<HalfRule, 3> rules = [] {
    std::array<HalfRule, 3> out;
    const int sizes[3] = {6, 12, 20};
    for (int r = 0; r < 3; ++r) {
      const GaussRule full = gauss_legendre(sizes[r]);
      out[r].size = sizes[r] / 2;
      for (int i = 0; i < out[r].size; ++i) {
        out[r].x[i] = full.nodes[i];
        out[r].w[i] = full.weights[i];
      }
    }
    return out;
  }();
  return rules;
}

// Upper orthant P(X > h, Y > k).
double bvn_upper(double h, double k, double r) {
  const auto& rules = bvn_rules();
  const HalfRule& rule = std::abs(r) < 0.3 ? rules[0] : (std::abs(r) < 0.75 ? rules[1] : rules[2]);

  double hk = h * k;
  double bvn = 0.0;
  if (std::abs(r) < 0.925) {
    const double hs = (h * h + k * k) / 2.0;
    const double asr = std::asin(r);
    for (int i = 0; i < rule.size; ++i) {
      double sn = std::sin(asr * (rule.x[i] + 1.0) / 2.0);
      bvn += rule.w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
      sn = std::sin(asr * (-rule.x[i] + 1.0) / 2.0);
      bvn += rule.w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
    }
    return bvn * asr / (2.0 * kTwoPi) + normal_sf(h) * normal_sf(k);
  }

  if (r < 0.0) {
    k = -k;
    hk = -hk;
  }
  if (std::abs(r) < 1.0) {
    const double as = (1.0 - r) * (1.0 + r);
    double a = std::sqrt(as);
    const double bs = (h - k) * (h - k);
    const double c = (4.0 - hk) / 8.0;
    const double d = (12.0 - hk) / 16.0;
    bvn = a * std::exp(-(bs / as + hk) / 2.0) *
          (1.0 - c * (bs - as) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as * as / 5.0);
    if (hk > -160.0) {
      const double b = std::sqrt(bs);
      bvn -= std::exp(-hk / 2.0) * std::sqrt(kTwoPi) * normal_cdf(-b / a) * b *
             (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
    }
    a /= 2.0;
    for (int i = 0; i < rule.size; ++i) {
      for (double sign : {1.0, -1.0}) {
        const double xs = std::pow(a * (sign * rule.x[i] + 1.0), 2);
        const double rs = std::sqrt(1.0 - xs);
        const double asr = -(bs / xs + hk) / 2.0;
        if (asr > -100.0) {
          bvn += a * rule.w[i] * std::exp(asr) *
                 (std::exp(-hk * xs / (2.0 * std::pow(1.0 + rs, 2))) / rs -
                  (1.0 + c * xs * (1.0 + d * xs)));
        }
      }
    }
    bvn = -bvn / kTwoPi;
  }
  if (r > 0.0) return bvn + normal_sf(std::max(h, k));
  return -bvn + std::max(0.0, normal_sf(h) - normal_sf(k));
}

}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_sf(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    throw std::invalid_argument("normal_quantile: probability outside [0, 1]");
  }
  // Work in the lower tail so the residual keeps relative precision.
  const bool upper = p > 0.5;
  const double q = upper ? 1.0 - p : p;
  if (q == 0.5) return 0.0;

  // Rational starting point (|error| < 4.5e-4), then Halley steps.
  const double t = std::sqrt(-2.0 * std::log(q));
  double x = -(t - (2.515517 + 0.802853 * t + 0.010328 * t * t) /
                       (1.0 + 1.432788 * t + 0.189269 * t * t + 0.001308 * t * t * t));
  for (int iter = 0; iter < 6; ++iter) {
    const double err = normal_cdf(x) - q;
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(kTwoPi);
    const double u = err / pdf;
    const double step = u / (1.0 + 0.5 * x * u);
    x -= step;
    if (std::abs(step) <= 1e-16 * std::max(1.0, std::abs(x))) break;
  }
  return upper ? -x : x;
}

double bivariate_normal_cdf(double h, double k, double rho) {
  if (std::isnan(h) || std::isnan(k) || std::isnan(rho)) return std::numeric_limits<double>::quiet_NaN();
  if (h == -std::numeric_limits<double>::infinity() || k == -std::numeric_limits<double>::infinity()) return 0.0;
  if (h == std::numeric_limits<double>::infinity()) return normal_cdf(k);
  if (k == std::numeric_limits<double>::infinity()) return normal_cdf(h);
  return std::clamp(bvn_upper(-h, -k, rho), 0.0, 1.0);
}

double log_bessel_k(double nu, double x) {
  if (!(x > 0.0)) throw std::invalid_argument("log_bessel_k: argument must be positive");
  nu = std::abs(nu);
  double value = std::numeric_limits<double>::quiet_NaN();
  try {
    value = std::cyl_bessel_k(nu, x);
  } catch (const std::exception&) {
    value = std::numeric_limits<double>::quiet_NaN();
  }
  if (std::isfinite(value) && value > 0.0) return std::log(value);

  // Large-argument expansion, valid when x dominates nu^2.
  if (x > std::max(50.0, nu * nu)) {
    const double mu = 4.0 * nu * nu;
    double term = 1.0;
    double series = 1.0;
    for (int j = 1; j < 8; ++j) {
      term *= (mu - std::pow(2.0 * j - 1.0, 2)) / (8.0 * j * x);
      series += term;
    }
    return 0.5 * std::log(std::numbers::pi / (2.0 * x)) - x + std::log(series);
  }
  return std::numeric_limits<double>::quiet_NaN();
}

}  // namespace mktcop
