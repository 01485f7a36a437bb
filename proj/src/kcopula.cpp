#include "mktcop/kcopula.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "mktcop/parallel.hpp"
#include "mktcop/special_functions.hpp"

namespace mktcop {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kQuantileTolerance = 1e-10;
constexpr int kFixedLevel = 2;

// Log K density of dimension `dim` at quadratic form q = r' S^-1 r.
double log_k_density(int dim, double q, double log_det_sigma, double N) {
  const double nu = 0.5 * (dim - N);
  const double order = std::abs(nu);
  const double constant = 0.5 * (2.0 - N) * std::numbers::ln2 + 0.5 * dim * std::log(N) - std::lgamma(0.5 * N) -
                          0.5 * (dim * std::log(2.0 * std::numbers::pi) + log_det_sigma);
  if (q <= 0.0) {
    if (N <= dim) return kInf;
    // y^{-nu} K_nu(y) -> Gamma(|nu|) 2^{|nu|-1} as y -> 0 for nu < 0.
    return constant + std::lgamma(order) + (order - 1.0) * std::numbers::ln2;
  }
  const double y = std::sqrt(N * q);
  const double log_bessel = log_bessel_k(order, y);
  if (std::isfinite(log_bessel)) return constant + log_bessel - nu * std::log(y);

  // Closed form out of range: integrate the scale mixture directly.
  const GammaExpectation mixture(0.5 * N);
  auto integrand = [&](double z) {
    return std::exp(0.5 * dim * std::log(N / (4.0 * std::numbers::pi * z)) - N * q / (4.0 * z));
  };
  const double rough = mixture.fixed(integrand, kFixedLevel);
  const double value = mixture(integrand, std::max(1e-300, 1e-11 * rough));
  return std::log(value) - 0.5 * log_det_sigma;
}

}  // namespace

void KCopulaParams::validate() const {
  if (!(std::abs(c) < 1.0)) throw std::invalid_argument("K-copula: |c| must be below 1");
  if (!(N > 0.0) || !std::isfinite(N)) throw std::invalid_argument("K-copula: N must be positive and finite");
}

KDistribution::KDistribution(double N, QuadratureSpec spec) : N_(N), mixture_(0.5 * N, spec) {
  if (!(N > 0.0) || !std::isfinite(N)) throw std::invalid_argument("K-distribution: N must be positive and finite");
}

double KDistribution::marginal_pdf(double x) const { return k_marginal_pdf(x, N_); }

double KDistribution::marginal_tail(double x) const {
  const double a = std::abs(x);
  if (a == 0.0) return 0.5;
  if (std::isinf(a)) return 0.0;
  const double scale = std::sqrt(0.5 * N_);
  return mixture_([&](double z) { return normal_cdf(-a * scale / std::sqrt(z)); }, spec().cdf_tolerance);
}

double KDistribution::marginal_cdf(double x) const {
  if (std::isnan(x)) return x;
  const double tail = marginal_tail(x);
  return x < 0.0 ? tail : 1.0 - tail;
}

double KDistribution::marginal_quantile(double u) const {
  if (!(u > 0.0 && u < 1.0)) throw std::invalid_argument("marginal_quantile: u must lie in (0, 1)");
  if (u == 0.5) return 0.0;
  // Solve tail(x) = p for x >= 0 on a fixed rule so the target is smooth in x.
  const double p = u < 0.5 ? u : 1.0 - u;
  const double scale = std::sqrt(0.5 * N_);
  auto tail_on = [&](int level, double x) {
    return mixture_.fixed([&](double z) { return normal_cdf(-x * scale / std::sqrt(z)); }, level);
  };

  auto tail = [&](double x) { return tail_on(kFixedLevel, x); };
  double x = std::max(-normal_quantile(p), 1e-3);

  double lo = 0.0;
  double hi = x;
  while (tail(hi) > p) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e6) throw std::runtime_error("marginal_quantile: failed to bracket");
  }
  x = 0.5 * (lo + hi);
  for (int iter = 0; iter < 200; ++iter) {
    const double residual = tail(x) - p;
    if (std::abs(residual) <= 0.01 * kQuantileTolerance) break;
    if (residual > 0.0) lo = x; else hi = x;
    // tail'(x) = -pdf(x)
    const double pdf = k_marginal_pdf(x, N_);
    double next = x + residual / pdf;
    if (!(pdf > 0.0) || !(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (hi - lo <= 1e-15 * std::max(1.0, hi)) break;
    x = next;
  }
  return u < 0.5 ? -x : x;
}

double KDistribution::bivariate_cdf(double r1, double r2, double c) const {
  if (!(std::abs(c) < 1.0)) throw std::invalid_argument("bivariate_cdf: |c| must be below 1");
  if (r1 == -kInf || r2 == -kInf) return 0.0;
  if (r1 == kInf) return marginal_cdf(r2);
  if (r2 == kInf) return marginal_cdf(r1);
  const double scale = std::sqrt(0.5 * N_);
  return mixture_(
      [&](double z) {
        const double s = scale / std::sqrt(z);
        return bivariate_normal_cdf(r1 * s, r2 * s, c);
      },
      spec().joint_cdf_tolerance);
}

double KDistribution::copula_cdf(double u, double v, double c) const {
  if (!(u >= 0.0 && u <= 1.0 && v >= 0.0 && v <= 1.0)) throw std::invalid_argument("copula_cdf: arguments must lie in [0, 1]");
  if (u == 0.0 || v == 0.0) return 0.0;
  if (u == 1.0) return v;
  if (v == 1.0) return u;
  return std::clamp(bivariate_cdf(marginal_quantile(u), marginal_quantile(v), c), 0.0, 1.0);
}

double k_pdf_bivariate(double r1, double r2, const KCopulaParams& params) {
  params.validate();
  const double one_minus = 1.0 - params.c * params.c;
  const double q = (r1 * r1 - 2.0 * params.c * r1 * r2 + r2 * r2) / one_minus;
  return std::exp(log_k_density(2, q, std::log(one_minus), params.N));
}

double k_marginal_pdf(double x, double N) {
  if (!(N > 0.0)) throw std::invalid_argument("k_marginal_pdf: N must be positive");
  return std::exp(log_k_density(1, x * x, 0.0, N));
}

double k_marginal_cdf(double x, double N, const QuadratureSpec& spec) { return KDistribution(N, spec).marginal_cdf(x); }

double k_marginal_quantile(double u, double N, const QuadratureSpec& spec) {
  return KDistribution(N, spec).marginal_quantile(u);
}

double k_bivariate_cdf(double r1, double r2, const KCopulaParams& params, const QuadratureSpec& spec) {
  params.validate();
  return KDistribution(params.N, spec).bivariate_cdf(r1, r2, params.c);
}

double k_copula_cdf(double u, double v, const KCopulaParams& params, const QuadratureSpec& spec) {
  params.validate();
  return KDistribution(params.N, spec).copula_cdf(u, v, params.c);
}

namespace {

// Density grid from a cdf on interior nodes (quantile points) and uniform margins.
template <class JointCdf>
CopulaGrid grid_from_cdf(int bins, JointCdf&& joint) {
  if (bins < 1) throw std::invalid_argument("copula grid: bins must be positive");
  Eigen::MatrixXd cop = Eigen::MatrixXd::Zero(bins + 1, bins + 1);
  for (int i = 0; i <= bins; ++i) {
    cop(bins, i) = static_cast<double>(i) / bins;
    cop(i, bins) = static_cast<double>(i) / bins;
  }
  parallel_for(static_cast<std::size_t>(std::max(bins - 1, 0)), [&](std::size_t row) {
    const int i = static_cast<int>(row) + 1;
    for (int j = 1; j < bins; ++j) cop(i, j) = joint(i, j);
  });
  CopulaGrid grid;
  grid.kind = GridKind::analytic;
  grid.density.resize(bins, bins);
  const double area_inverse = static_cast<double>(bins) * bins;
  for (int a = 0; a < bins; ++a) {
    for (int b = 0; b < bins; ++b) {
      grid.density(a, b) = (cop(a + 1, b + 1) - cop(a + 1, b) - cop(a, b + 1) + cop(a, b)) * area_inverse;
    }
  }
  return grid;
}

// q(i / bins) for i = 0..bins, exactly odd about the middle.
template <class Quantile>
std::vector<double> edge_quantiles(int bins, Quantile&& quantile) {
  std::vector<double> q(bins + 1, 0.0);
  q[0] = -kInf;
  q[bins] = kInf;
  const int half = bins / 2;
  parallel_for(static_cast<std::size_t>(half), [&](std::size_t idx) {
    const int i = static_cast<int>(idx) + 1;
    if (2 * i == bins) return;
    q[i] = quantile(static_cast<double>(i) / bins);
  });
  for (int i = 1; i < bins; ++i) {
    if (2 * i > bins) q[i] = -q[bins - i];
    if (2 * i == bins) q[i] = 0.0;
  }
  return q;
}

}  // namespace

CopulaGrid k_copula_density_grid(const KCopulaParams& params, int bins, const QuadratureSpec& spec) {
  params.validate();
  const KDistribution dist(params.N, spec);
  const std::vector<double> q = edge_quantiles(bins, [&](double u) { return dist.marginal_quantile(u); });
  return grid_from_cdf(bins, [&](int i, int j) { return dist.bivariate_cdf(q[i], q[j], params.c); });
}

CopulaGrid gaussian_copula_density_grid(double c, int bins) {
  if (!(std::abs(c) < 1.0)) throw std::invalid_argument("gaussian copula: |c| must be below 1");
  const std::vector<double> q = edge_quantiles(bins, [](double u) { return normal_quantile(u); });
  return grid_from_cdf(bins, [&](int i, int j) { return bivariate_normal_cdf(q[i], q[j], c); });
}

double grid_msd(const CopulaGrid& empirical, const CopulaGrid& analytic) {
  if (empirical.density.rows() != analytic.density.rows() || empirical.density.cols() != analytic.density.cols())
    throw std::invalid_argument("grid_msd: grid shapes differ");
  if (empirical.density.size() == 0) throw std::invalid_argument("grid_msd: empty grid");
  return (empirical.density - analytic.density).array().square().mean();
}

CopulaGrid grid_difference(const CopulaGrid& empirical, const CopulaGrid& analytic) {
  if (empirical.density.rows() != analytic.density.rows() || empirical.density.cols() != analytic.density.cols())
    throw std::invalid_argument("grid_difference: grid shapes differ");
  CopulaGrid diff;
  diff.density = empirical.density - analytic.density;
  diff.kind = GridKind::difference;
  diff.state = empirical.state;
  diff.pairs = empirical.pairs;
  return diff;
}

FitResult fit_N(const CopulaGrid& empirical, double c_bar, const FitOptions& options) {
  if (!(std::abs(c_bar) < 1.0)) throw std::invalid_argument("fit_N: |c_bar| must be below 1");
  if (empirical.density.size() == 0 || empirical.density.rows() != empirical.density.cols())
    throw std::invalid_argument("fit_N: empirical grid must be square and non-empty");
  if (!empirical.density.allFinite()) throw std::invalid_argument("fit_N: empirical grid has non-finite entries");
  if (!(options.n_min > 0.0) || !(options.n_max > options.n_min) || options.coarse_points < 3 ||
      !(options.relative_width > 0.0))
    throw std::invalid_argument("fit_N: bad search options");

  const int bins = empirical.bins();
  FitResult result;
  auto objective = [&](double N) {
    return grid_msd(empirical, k_copula_density_grid({c_bar, N}, bins, options.quadrature));
  };

  const int points = options.coarse_points;
  std::vector<double> grid_n(points), values(points);
  const double log_lo = std::log(options.n_min);
  const double log_hi = std::log(options.n_max);
  for (int i = 0; i < points; ++i) grid_n[i] = std::exp(log_lo + (log_hi - log_lo) * i / (points - 1));
  grid_n.front() = options.n_min;
  grid_n.back() = options.n_max;
  // Grid construction parallelizes internally; the scan itself stays serial.
  for (int i = 0; i < points; ++i) values[i] = objective(grid_n[i]);
  result.evaluations = points;

  const int best = static_cast<int>(std::min_element(values.begin(), values.end()) - values.begin());
  double a = grid_n[std::max(best - 1, 0)];
  double b = grid_n[std::min(best + 1, points - 1)];

  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - inv_phi * (b - a);
  double x2 = a + inv_phi * (b - a);
  double f1 = objective(x1);
  double f2 = objective(x2);
  result.evaluations += 2;
  while ((b - a) > options.relative_width * 0.5 * (a + b)) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = objective(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = objective(x2);
    }
    ++result.evaluations;
  }

  // Keep the best point seen, including the coarse scan.
  result.N = f1 <= f2 ? x1 : x2;
  result.msd = std::min(f1, f2);
  if (values[best] < result.msd) {
    result.N = grid_n[best];
    result.msd = values[best];
  }
  const double edge = options.relative_width * 2.0;
  result.at_boundary = result.N <= options.n_min * (1.0 + edge) || result.N >= options.n_max * (1.0 - edge);
  return result;
}

double wishart_ensemble_variance(double sigma_kl, double sigma_kk, double sigma_ll, double N) {
  if (!(N > 0.0)) throw std::invalid_argument("wishart_ensemble_variance: N must be positive");
  return (sigma_kl * sigma_kl + sigma_kk * sigma_ll) / N;
}

double k_pdf_multivariate(const Eigen::Ref<const Eigen::VectorXd>& r, const Eigen::Ref<const Eigen::MatrixXd>& sigma,
                          double N) {
  if (!(N > 0.0)) throw std::invalid_argument("k_pdf_multivariate: N must be positive");
  const Index dim = r.size();
  if (dim < 1 || sigma.rows() != dim || sigma.cols() != dim) throw std::invalid_argument("k_pdf_multivariate: dimension mismatch");
  if (!sigma.isApprox(sigma.transpose(), 1e-12)) throw std::invalid_argument("k_pdf_multivariate: covariance must be symmetric");
  const Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("k_pdf_multivariate: covariance must be positive definite");
  const Eigen::VectorXd w = llt.matrixL().solve(r);
  const double q = w.squaredNorm();
  const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return std::exp(log_k_density(static_cast<int>(dim), q, log_det, N));
}

}  // namespace mktcop
