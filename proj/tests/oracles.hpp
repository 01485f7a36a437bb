#pragma once

// Reference computations for the tests. Nothing here calls into the library.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

namespace oracle {

/// Adaptive Simpson on [a, b].
inline double simpson(const std::function<double(double)>& f, double a, double b, double tol, int depth = 50) {
  struct Rec {
    const std::function<double(double)>& f;
    double run(double a, double b, double fa, double fm, double fb, double whole, double tol, int depth) const {
      const double m = 0.5 * (a + b);
      const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
      const double flm = f(lm), frm = f(rm);
      const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
      const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
      const double delta = left + right - whole;
      if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
      return run(a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + run(m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
    }
  } rec{f};
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  return rec.run(a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, depth);
}

/// Integral over (0, inf) by z = exp(t), split into unit pieces of t. A
/// second pass tightens the tolerance relative to the first estimate.
inline double half_line(const std::function<double(double)>& f, double t_lo = -60.0, double t_hi = 6.0, double tol = 1e-13) {
  auto pass = [&](double eps) {
    double total = 0.0;
    for (double t = t_lo; t < t_hi; t += 1.0) {
      total += simpson([&](double s) { const double z = std::exp(s); return f(z) * z; }, t, t + 1.0, eps);
    }
    return total;
  };
  const double rough = pass(tol);
  const double eps = tol * std::abs(rough);
  return eps > 0.0 && eps < 0.5 * tol ? pass(eps) : rough;
}

/// Lower log-z limit leaving Gamma(a, 1) mass below about e^-40.
inline double gamma_t_lo(double a) { return std::min(-60.0, -40.0 / a); }

inline double phi(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }
inline double Phi(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Bivariate normal cdf as a one-dimensional integral of phi(x) Phi((k - rho x) / sqrt(1 - rho^2)).
inline double bvn(double h, double k, double rho) {
  const double s = std::sqrt(1.0 - rho * rho);
  const double lo = -12.0;
  if (h <= lo) return 0.0;
  return simpson([&](double x) { return phi(x) * Phi((k - rho * x) / s); }, lo, std::min(h, 12.0), 1e-14);
}

/// Gamma(a, 1) density.
inline double gamma_pdf(double z, double a) { return std::exp((a - 1.0) * std::log(z) - z - std::lgamma(a)); }

/// K marginal cdf by direct mixture integration.
inline double k_cdf(double x, double N) {
  const double a = 0.5 * N;
  return half_line([&](double z) { return gamma_pdf(z, a) * Phi(x * std::sqrt(N / (2.0 * z))); }, gamma_t_lo(a));
}

/// K bivariate cdf by direct mixture integration with the 1-D bvn oracle.
inline double k_cdf2(double x, double y, double c, double N) {
  const double a = 0.5 * N;
  return half_line(
      [&](double z) {
        const double s = std::sqrt(N / (2.0 * z));
        return gamma_pdf(z, a) * bvn(x * s, y * s, c);
      },
      std::max(gamma_t_lo(a), -100.0), 5.0, 1e-11);
}

/// Multivariate K density by mixture integration of Gaussian densities.
inline double k_pdf(const Eigen::VectorXd& r, const Eigen::MatrixXd& sigma, double N) {
  const Eigen::Index K = r.size();
  const double q = r.dot(sigma.inverse() * r);
  const double det = sigma.determinant();
  const double a = 0.5 * N;
  return half_line([&](double z) {
    const double scale = 2.0 * z / N;
    return gamma_pdf(z, a) * std::exp(-0.5 * q / scale) / std::sqrt(std::pow(2.0 * std::numbers::pi * scale, K) * det);
  }, gamma_t_lo(a));
}

/// Textbook two-pass Pearson correlation.
inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

/// Minimum total point-to-nearest-medoid cost over all k-subsets.
inline double best_medoid_cost(const Eigen::MatrixXd& d, int k) {
  const int n = static_cast<int>(d.rows());
  std::vector<int> pick(n, 0);
  std::fill(pick.end() - k, pick.end(), 1);
  double best = INFINITY;
  do {
    double cost = 0.0;
    for (int i = 0; i < n; ++i) {
      double m = INFINITY;
      for (int j = 0; j < n; ++j)
        if (pick[j]) m = std::min(m, d(i, j));
      cost += m;
    }
    best = std::min(best, cost);
  } while (std::next_permutation(pick.begin(), pick.end()));
  return best;
}

/// Mean and standard error of a sample.
struct MeanSe {
  double mean;
  double se;
};
inline MeanSe mean_se(const std::vector<double>& x) {
  double m = 0;
  for (double v : x) m += v;
  m /= x.size();
  double s = 0;
  for (double v : x) s += (v - m) * (v - m);
  s /= (x.size() - 1);
  return {m, std::sqrt(s / x.size())};
}

/// Excess kurtosis with a delta-method standard error from the first eight moments.
inline MeanSe excess_kurtosis(const Eigen::Ref<const Eigen::VectorXd>& x) {
  const double n = static_cast<double>(x.size());
  const double m = x.mean();
  double m2 = 0, m4 = 0, m6 = 0, m8 = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double d = x[i] - m, d2 = d * d;
    m2 += d2;
    m4 += d2 * d2;
    m6 += d2 * d2 * d2;
    m8 += d2 * d2 * d2 * d2;
  }
  m2 /= n;
  m4 /= n;
  m6 /= n;
  m8 /= n;
  const double k = m4 / (m2 * m2) - 3.0;
  // Influence function of m4/m2^2 (centering ignored for symmetric data).
  const double var = (m8 - m4 * m4 - 4.0 * (m4 / m2) * (m6 - m4 * m2) + 4.0 * (m4 / m2) * (m4 / m2) * (m4 - m2 * m2)) /
                     (m2 * m2 * m2 * m2);
  return {k, std::sqrt(var / n)};
}

}  // namespace oracle
