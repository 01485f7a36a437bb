#pragma once

// Scalar special functions used by the K-distribution evaluators.

namespace mktcop {

/// Standard normal cdf.
double normal_cdf(double x);

/// Standard normal upper tail, 1 - normal_cdf(x), without cancellation.
double normal_sf(double x);

/// Inverse of normal_cdf on (0, 1). Full double precision.
double normal_quantile(double p);

/// P(X <= h, Y <= k) for standard bivariate normal with correlation rho.
/// Genz's BVU algorithm (Drezner-Wesolowsky with Gauss-Legendre nodes),
/// absolute accuracy near 1e-15. Infinite limits are accepted.
double bivariate_normal_cdf(double h, double k, double rho);

/// log K_nu(x) for real order nu and x > 0. Returns -inf/+inf only when
/// the value itself under/overflows the log domain; callers should treat a
/// non-finite return as "use another route".
double log_bessel_k(double nu, double x);

}  // namespace mktcop
