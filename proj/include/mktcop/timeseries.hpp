#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace mktcop {

using Index = Eigen::Index;
using BoolArray = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// K stocks by T+1 days of strictly positive prices.
struct PriceMatrix {
  std::vector<std::string> tickers;
  std::vector<std::string> dates;  // ISO-8601, strictly increasing
  Eigen::MatrixXd values;          // tickers.size() x dates.size()

  Index stocks() const { return values.rows(); }
  Index days() const { return values.cols(); }

  /// Throws std::invalid_argument naming the offending ticker/date.
  void validate() const;
};

enum class ReturnKind { original, locally_normalized };

const char* to_string(ReturnKind kind);

/// K x T returns. Points where `valid` is false carry 0.0 and take no part
/// in any estimate; they only arise from zero-variance local normalization.
struct ReturnMatrix {
  std::vector<std::string> tickers;
  std::vector<std::string> dates;
  Eigen::MatrixXd values;
  BoolArray valid;
  ReturnKind kind = ReturnKind::original;
  std::vector<Index> excluded;  // per stock count of invalid points

  Index stocks() const { return values.rows(); }
  Index days() const { return values.cols(); }
  bool all_valid() const { return valid.size() == 0 || valid.all(); }

  /// Columns [begin, end) with matching dates and mask.
  ReturnMatrix columns(Index begin, Index end) const;
};

/// Builds a ReturnMatrix with every point valid.
ReturnMatrix make_returns(std::vector<std::string> tickers, std::vector<std::string> dates,
                          Eigen::MatrixXd values, ReturnKind kind = ReturnKind::original);

struct WindowSpec {
  Index window_length = 42;
};

/// Half-open day range [begin, end).
struct TimeRange {
  Index begin = 0;
  Index end = 0;
  Index length() const { return end - begin; }
};

struct Window {
  Index index = 0;
  TimeRange range;
};

struct CorrelationMatrix {
  Eigen::MatrixXd values;
  Index window_index = 0;
  std::vector<Index> zero_variance;  // stocks whose off-diagonals were zeroed
};

/// Pearson coefficient with population moments. Empty when either input is
/// constant.
template <class X, class Y>
std::optional<double> pearson(const Eigen::DenseBase<X>& x, const Eigen::DenseBase<Y>& y) {
  const Index n = x.size();
  if (n != y.size() || n < 2) return std::nullopt;
  const auto xa = x.derived().array().template cast<double>();
  const auto ya = y.derived().array().template cast<double>();
  if (xa.maxCoeff() == xa.minCoeff() || ya.maxCoeff() == ya.minCoeff()) return std::nullopt;
  const double mx = xa.mean();
  const double my = ya.mean();
  const double sxy = ((xa - mx) * (ya - my)).sum();
  const double sxx = (xa - mx).square().sum();
  const double syy = (ya - my).square().sum();
  if (!(sxx > 0.0) || !(syy > 0.0)) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// r(t) = (S(t+lag) - S(t)) / S(t).
ReturnMatrix compute_returns(const PriceMatrix& prices, int lag = 1);

/// Trailing-window standardization over the n most recent points
/// (current point included), population moments. The first n-1 days are
/// dropped. A constant local window marks that point invalid.
ReturnMatrix local_normalize(const ReturnMatrix& returns, int n = 13);

/// Consecutive disjoint windows of spec.window_length days; the remainder
/// is dropped.
std::vector<Window> partition_windows(Index days, const WindowSpec& spec);

/// Pearson matrix over `range`. Pairs use the days valid for both stocks.
CorrelationMatrix correlation_matrix(const ReturnMatrix& returns, TimeRange range, Index window_index = 0);

/// Mean over all K(K-1)/2 pair coefficients on the full sample.
double average_correlation(const ReturnMatrix& returns);

/// Mean over the listed pairs.
double average_correlation(const ReturnMatrix& returns, std::span<const std::pair<Index, Index>> pairs);

}  // namespace mktcop
