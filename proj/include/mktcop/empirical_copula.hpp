#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <numeric>
#include <span>
#include <vector>

#include "mktcop/timeseries.hpp"

namespace mktcop {

enum class GridKind { empirical, analytic, difference };

const char* to_string(GridKind kind);

/// Binned copula density on the unit square. density(a, b) covers
/// u in bin a and v in bin b; bins are [a/B, (a+1)/B) with the last closed.
struct CopulaGrid {
  Eigen::MatrixXd density;
  GridKind kind = GridKind::empirical;
  int state = 0;
  Index pairs = 0;  // number of pair histograms averaged

  int bins() const { return static_cast<int>(density.rows()); }
  double bin_width() const { return 1.0 / bins(); }
  /// Sum of density * bin area.
  double mass() const { return density.sum() / (static_cast<double>(bins()) * bins()); }

  /// Throws unless square, entries finite and >= -negative_tolerance, and
  /// |mass - 1| <= mass_tolerance.
  void validate(double mass_tolerance = 1e-9, double negative_tolerance = 0.0) const;
};

/// Corner masses of a copula: L = [0, 0.2], U = [0.8, 1]; first letter is u.
struct TailStats {
  double ll = 0.0;
  double ul = 0.0;
  double uu = 0.0;
  double lu = 0.0;
  double alpha = 0.0;  // uu - ll
  double beta = 0.0;   // lu - ul
};

/// c(t) = #{tau : x(tau) <= x(t)}; ties share the maximal count.
template <class D>
std::vector<Index> rank_counts(const Eigen::DenseBase<D>& series) {
  const Index T = series.size();
  std::vector<Index> order(T);
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return series(a) < series(b); });
  std::vector<Index> counts(T);
  Index i = 0;
  while (i < T) {
    Index j = i;
    while (j + 1 < T && !(series(order[i]) < series(order[j + 1]))) ++j;
    for (Index m = i; m <= j; ++m) counts[order[m]] = j + 1;
    i = j + 1;
  }
  return counts;
}

/// u(t) = c(t)/T - 1/(2T), values in (0, 1).
template <class D>
Eigen::ArrayXd rank_transform(const Eigen::DenseBase<D>& series) {
  const Index T = series.size();
  const std::vector<Index> counts = rank_counts(series);
  Eigen::ArrayXd u(T);
  for (Index t = 0; t < T; ++t) u[t] = static_cast<double>(2 * counts[t] - 1) / (2.0 * static_cast<double>(T));
  return u;
}

/// Two-dimensional histogram density of (u, v): count / (T * bin area).
/// Values within 1e-9 bin widths of an edge are snapped onto it.
CopulaGrid pair_copula_histogram(const Eigen::Ref<const Eigen::ArrayXd>& u, const Eigen::Ref<const Eigen::ArrayXd>& v,
                                 int bins = 20);

/// Histogram from integer rank counts; exact bin assignment.
CopulaGrid pair_copula_histogram(const std::vector<Index>& u_counts, const std::vector<Index>& v_counts, int bins = 20);

/// Average of all K(K-1)/2 pair histograms of one state's series. Ranks
/// are computed on the supplied (state) series.
CopulaGrid state_average_copula(const ReturnMatrix& returns, int bins = 20);

/// Corner masses of a grid; bins must be divisible by 5.
TailStats tail_corner_masses(const CopulaGrid& grid);

/// Corner masses of a rank pair via its 20-bin histogram.
TailStats tail_corner_masses(const Eigen::Ref<const Eigen::ArrayXd>& u, const Eigen::Ref<const Eigen::ArrayXd>& v);

struct PairTail {
  Index k = 0;
  Index l = 0;
  TailStats stats;
};

struct Dispersion {
  double mean = 0.0;
  double sd_population = 0.0;
  double sd_sample = 0.0;
};

Dispersion dispersion(std::span<const double> values);

struct AsymmetryStats {
  std::vector<PairTail> pairs;
  Dispersion alpha;
  Dispersion beta;
};

/// Per-pair tail statistics from each pair's own histogram, with means
/// and spreads over pairs.
AsymmetryStats state_asymmetry(const ReturnMatrix& returns, int bins = 20);

struct StateCopulaAnalysis {
  CopulaGrid average;
  AsymmetryStats asymmetry;
};

/// state_average_copula and state_asymmetry in a single pass over pairs.
StateCopulaAnalysis analyze_state_pairs(const ReturnMatrix& returns, int bins = 20);

/// Counts of values in `bins` equal bins over [lo, hi]; outliers clamp to
/// the end bins.
std::vector<Index> value_histogram(std::span<const double> values, double lo, double hi, int bins);

}  // namespace mktcop
