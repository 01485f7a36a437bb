#include "mktcop/quadrature.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>

namespace mktcop {

namespace {

GaussRule golub_welsch(const Eigen::VectorXd& diagonal, const Eigen::VectorXd& off_diagonal) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.computeFromTridiagonal(diagonal, off_diagonal, Eigen::ComputeEigenvectors);
  if (solver.info() != Eigen::Success) throw std::runtime_error("golub_welsch: eigen solve failed");
  GaussRule rule;
  rule.nodes = solver.eigenvalues();
  rule.weights = solver.eigenvectors().row(0).transpose().array().square();
  return rule;
}

}  // namespace

GaussRule gauss_legendre(int n) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: n must be positive");
  Eigen::VectorXd diagonal = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd off(std::max(n - 1, 0));
  for (int i = 1; i < n; ++i) off[i - 1] = i / std::sqrt(4.0 * i * i - 1.0);
  GaussRule rule = golub_welsch(diagonal, off);
  rule.weights *= 2.0;

  // Polish nodes with Newton on P_n so symmetric pairs match to the last bit.
  for (int i = 0; i < n; ++i) {
    double x = rule.nodes[i];
    double derivative = 1.0;
    for (int iter = 0; iter < 3; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1.0;
      derivative = n * (x * p1 - p0) / (x * x - 1.0);
      x -= p1 / derivative;
    }
    rule.nodes[i] = x;
    rule.weights[i] = 2.0 / ((1.0 - x * x) * derivative * derivative);
  }
  for (int i = 0; i < n / 2; ++i) {
    const double x = 0.5 * (rule.nodes[n - 1 - i] - rule.nodes[i]);
    const double w = 0.5 * (rule.weights[n - 1 - i] + rule.weights[i]);
    rule.nodes[i] = -x;
    rule.nodes[n - 1 - i] = x;
    rule.weights[i] = rule.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  return rule;
}

GammaExpectation::GammaExpectation(double shape, QuadratureSpec spec) : shape_(shape), spec_(spec) {
  if (!(shape > 0.0) || !std::isfinite(shape)) throw std::invalid_argument("GammaExpectation: shape must be positive");
  spec_.validate();

  // log density of u, up to a constant: shape * t - e^t with t = log Z.
  const double center = std::log(shape);
  const double scale = 1.0 / std::sqrt(std::max(shape, 1.0));
  auto log_density = [&](double u) {
    const double t = center + scale * u;
    return shape * t - std::exp(t);
  };
  const double peak = log_density(0.0);
  const double floor = peak + std::log(spec_.cutoff);
  const double h0 = spec_.coarse_step;
  long lo = 0, hi = 0;
  while (log_density((lo - 1) * h0) > floor) --lo;
  while (log_density((hi + 1) * h0) > floor) ++hi;
  --lo;
  ++hi;

  double norm = 0.0;
  for (int level = 0; level <= spec_.max_level; ++level) {
    const long factor = 1L << level;
    const double h = h0 / static_cast<double>(factor);
    std::vector<double> z, w;
    for (long k = lo * factor; k <= hi * factor; ++k) {
      if (level > 0 && k % 2 == 0) continue;
      const double u = k * h;
      const double weight = std::exp(log_density(u) - peak);
      if (weight == 0.0) continue;
      z.push_back(std::exp(center + scale * u));
      w.push_back(weight);
    }
    // The step length cancels in sum(w g) / sum(w).
    for (double x : w) norm += x;
    nodes_.push_back(std::move(z));
    weights_.push_back(std::move(w));
    norms_.push_back(norm);
  }
}

Eigen::Index GammaExpectation::size(int level) const {
  Eigen::Index n = 0;
  for (int l = 0; l <= level && l < levels(); ++l) n += static_cast<Eigen::Index>(nodes_[l].size());
  return n;
}

}  // namespace mktcop
