#pragma once

#include <Eigen/Dense>

#include "mktcop/empirical_copula.hpp"
#include "mktcop/quadrature.hpp"

namespace mktcop {

/// Average correlation c and fluctuation strength N of the bivariate
/// K-copula. N is real-valued; larger N means a narrower Wishart ensemble.
struct KCopulaParams {
  double c = 0.0;
  double N = 5.0;

  void validate() const;
};

/// Unit-variance K-distribution with fluctuation parameter N, written as a
/// Gaussian scale mixture: r = sqrt(2z/N) * g with z ~ Gamma(N/2, 1).
/// Every cdf is a one-dimensional expectation over z.
class KDistribution {
 public:
  explicit KDistribution(double N, QuadratureSpec spec = {});

  double N() const { return N_; }
  const QuadratureSpec& spec() const { return mixture_.spec(); }

  double marginal_pdf(double x) const;
  double marginal_cdf(double x) const;
  /// Root of marginal_cdf(x) = u with |F(x) - u| <= 1e-10; odd about 1/2.
  double marginal_quantile(double u) const;
  double bivariate_cdf(double r1, double r2, double c) const;
  /// Cop(u, v) = F(q(u), q(v)) with exact margins at the unit-square edges.
  double copula_cdf(double u, double v, double c) const;

 private:
  // P(X <= -|x|), computed without cancellation.
  double marginal_tail(double x) const;

  double N_;
  GammaExpectation mixture_;
};

/// Bivariate K density at (r1, r2); +inf at the origin when N <= 2.
double k_pdf_bivariate(double r1, double r2, const KCopulaParams& params);

/// Marginal K density (unit variance).
double k_marginal_pdf(double x, double N);

double k_marginal_cdf(double x, double N, const QuadratureSpec& spec = {});
double k_marginal_quantile(double u, double N, const QuadratureSpec& spec = {});
double k_bivariate_cdf(double r1, double r2, const KCopulaParams& params, const QuadratureSpec& spec = {});
double k_copula_cdf(double u, double v, const KCopulaParams& params, const QuadratureSpec& spec = {});

/// Bin densities from the four-corner difference of the copula cdf,
/// divided by the bin area.
CopulaGrid k_copula_density_grid(const KCopulaParams& params, int bins = 20, const QuadratureSpec& spec = {});

/// Same construction for the Gaussian copula with correlation c.
CopulaGrid gaussian_copula_density_grid(double c, int bins = 20);

/// Mean over all bins of the squared density difference.
double grid_msd(const CopulaGrid& empirical, const CopulaGrid& analytic);

/// empirical - analytic, bin by bin.
CopulaGrid grid_difference(const CopulaGrid& empirical, const CopulaGrid& analytic);

struct FitOptions {
  double n_min = 1.0;
  double n_max = 500.0;
  int coarse_points = 24;          // log-spaced scan
  double relative_width = 1e-3;    // golden-section stop
  QuadratureSpec quadrature{};
};

struct FitResult {
  double N = 0.0;
  double msd = 0.0;
  bool at_boundary = false;
  int evaluations = 0;
};

/// N minimizing grid_msd(empirical, k_copula_density_grid({c_bar, N})).
FitResult fit_N(const CopulaGrid& empirical, double c_bar, const FitOptions& options = {});

/// var([A A^T]_kl) = (S_kl^2 + S_kk S_ll) / N.
double wishart_ensemble_variance(double sigma_kl, double sigma_kk, double sigma_ll, double N);

/// Multivariate K density for average covariance sigma (symmetric positive
/// definite). +inf at the origin when N <= K.
double k_pdf_multivariate(const Eigen::Ref<const Eigen::VectorXd>& r, const Eigen::Ref<const Eigen::MatrixXd>& sigma,
                          double N);

}  // namespace mktcop
