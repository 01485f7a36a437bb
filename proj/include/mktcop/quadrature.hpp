#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <vector>

namespace mktcop {

/// Nodes and weights of an interpolatory rule.
struct GaussRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};

/// n-point Gauss-Legendre rule on [-1, 1], nodes ascending.
GaussRule gauss_legendre(int n);

/// Tolerances and budgets for mixture integrals.
struct QuadratureSpec {
  double cdf_tolerance = 1e-10;       // 1-D (marginal) cdf
  double joint_cdf_tolerance = 1e-9;  // 2-D (bivariate) cdf
  double coarse_step = 0.5;           // trapezoid step of level 0
  int max_level = 6;                  // step halves per level
  double cutoff = 1e-15;              // density truncation relative to the peak

  void validate() const {
    if (!(cdf_tolerance > 0.0) || !(joint_cdf_tolerance > 0.0))
      throw std::invalid_argument("QuadratureSpec: tolerances must be positive");
    if (!(coarse_step > 0.0) || max_level < 1 || max_level > 20)
      throw std::invalid_argument("QuadratureSpec: bad step budget");
    if (!(cutoff > 0.0 && cutoff < 1e-3)) throw std::invalid_argument("QuadratureSpec: cutoff must lie in (0, 1e-3)");
  }
};

/// Expectation E[g(Z)] for Z ~ Gamma(shape, 1).
///
/// Trapezoidal rule in u, where Z = shape * exp(u / sqrt(max(shape, 1))).
/// The integrand is analytic in a strip around the real u axis, so the rule
/// converges exponentially and the step size of each level halves the
/// previous one while reusing its nodes. Weights of each level are
/// normalized to sum to one.
class GammaExpectation {
 public:
  explicit GammaExpectation(double shape, QuadratureSpec spec = {});

  double shape() const { return shape_; }
  const QuadratureSpec& spec() const { return spec_; }
  int levels() const { return static_cast<int>(nodes_.size()); }
  /// Node count of the rule at `level` (all coarser nodes included).
  Eigen::Index size(int level) const;

  /// Refines until two successive levels agree to `tolerance`; returns the
  /// finest estimate.
  template <class G>
  double operator()(G&& g, double tolerance) const {
    double sum = accumulate(0, g);
    double previous = sum / norms_[0];
    for (int level = 1; level < levels(); ++level) {
      sum += accumulate(level, g);
      const double current = sum / norms_[level];
      if (std::abs(current - previous) <= tolerance) return current;
      previous = current;
    }
    return previous;
  }

  /// Fixed rule, no adaptivity. Smooth in any parameter g depends on, which
  /// root finders need.
  template <class G>
  double fixed(G&& g, int level) const {
    if (level < 0 || level >= levels()) throw std::out_of_range("GammaExpectation: level out of range");
    double sum = 0.0;
    for (int l = 0; l <= level; ++l) sum += accumulate(l, g);
    return sum / norms_[level];
  }

 private:
  template <class G>
  double accumulate(int level, G& g) const {
    const auto& z = nodes_[level];
    const auto& w = weights_[level];
    double sum = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) sum += w[i] * g(z[i]);
    return sum;
  }

  double shape_;
  QuadratureSpec spec_;
  std::vector<std::vector<double>> nodes_;    // nodes new at each level
  std::vector<std::vector<double>> weights_;  // density relative to its peak
  std::vector<double> norms_;                 // weight total through each level
};

}  // namespace mktcop
