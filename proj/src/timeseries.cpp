#include "mktcop/timeseries.hpp"

#include <stdexcept>
#include <string>

namespace mktcop {

void PriceMatrix::validate() const {
  if (static_cast<Index>(tickers.size()) != values.rows())
    throw std::invalid_argument("price matrix: ticker count does not match row count");
  if (static_cast<Index>(dates.size()) != values.cols())
    throw std::invalid_argument("price matrix: date count does not match column count");
  for (std::size_t t = 1; t < dates.size(); ++t) {
    if (!(dates[t - 1] < dates[t]))
      throw std::invalid_argument("price matrix: dates not strictly increasing at " + dates[t]);
  }
  for (Index k = 0; k < values.rows(); ++k) {
    for (Index t = 0; t < values.cols(); ++t) {
      const double p = values(k, t);
      if (!(p > 0.0) || !std::isfinite(p)) {
        throw std::invalid_argument("nonpositive price for ticker " + tickers[k] + " on " + dates[t] + ": " +
                                    std::to_string(p));
      }
    }
  }
}

const char* to_string(ReturnKind kind) {
  return kind == ReturnKind::original ? "original" : "locally_normalized";
}

ReturnMatrix make_returns(std::vector<std::string> tickers, std::vector<std::string> dates, Eigen::MatrixXd values,
                          ReturnKind kind) {
  ReturnMatrix out;
  out.tickers = std::move(tickers);
  out.dates = std::move(dates);
  out.values = std::move(values);
  out.valid = BoolArray::Constant(out.values.rows(), out.values.cols(), true);
  out.kind = kind;
  out.excluded.assign(out.values.rows(), 0);
  return out;
}

ReturnMatrix ReturnMatrix::columns(Index begin, Index end) const {
  if (begin < 0 || end > days() || begin > end) throw std::out_of_range("ReturnMatrix::columns: bad range");
  ReturnMatrix out;
  out.tickers = tickers;
  out.dates.assign(dates.begin() + begin, dates.begin() + end);
  out.values = values.middleCols(begin, end - begin);
  out.valid = valid.size() ? BoolArray(valid.middleCols(begin, end - begin))
                           : BoolArray::Constant(stocks(), end - begin, true);
  out.kind = kind;
  out.excluded.assign(stocks(), 0);
  for (Index k = 0; k < stocks(); ++k) out.excluded[k] = (!out.valid.row(k)).count();
  return out;
}

ReturnMatrix compute_returns(const PriceMatrix& prices, int lag) {
  prices.validate();
  if (lag < 1) throw std::invalid_argument("compute_returns: lag must be positive");
  if (prices.days() <= lag) throw std::invalid_argument("compute_returns: need more than lag price days");
  const Index days = prices.days() - lag;
  Eigen::MatrixXd values(prices.stocks(), days);
  for (Index t = 0; t < days; ++t) {
    values.col(t) = (prices.values.col(t + lag) - prices.values.col(t)).cwiseQuotient(prices.values.col(t));
  }
  std::vector<std::string> dates(prices.dates.begin() + lag, prices.dates.end());
  return make_returns(prices.tickers, std::move(dates), std::move(values), ReturnKind::original);
}

ReturnMatrix local_normalize(const ReturnMatrix& returns, int n) {
  if (returns.kind != ReturnKind::original)
    throw std::invalid_argument("local_normalize: input must be original returns");
  if (n < 2) throw std::invalid_argument("local_normalize: n must be at least 2");
  if (returns.days() < n) throw std::invalid_argument("local_normalize: series shorter than the local window");

  const Index days = returns.days() - (n - 1);
  ReturnMatrix out;
  out.tickers = returns.tickers;
  out.dates.assign(returns.dates.begin() + (n - 1), returns.dates.end());
  out.values = Eigen::MatrixXd::Zero(returns.stocks(), days);
  out.valid = BoolArray::Constant(returns.stocks(), days, true);
  out.kind = ReturnKind::locally_normalized;
  out.excluded.assign(returns.stocks(), 0);

  for (Index k = 0; k < returns.stocks(); ++k) {
    for (Index t = 0; t < days; ++t) {
      const auto window = returns.values.row(k).segment(t, n).array();
      if (window.maxCoeff() == window.minCoeff()) {
        out.valid(k, t) = false;
        ++out.excluded[k];
        continue;
      }
      const double mean = window.mean();
      const double variance = (window - mean).square().mean();
      out.values(k, t) = (returns.values(k, t + n - 1) - mean) / std::sqrt(variance);
    }
  }
  return out;
}

std::vector<Window> partition_windows(Index days, const WindowSpec& spec) {
  if (spec.window_length < 2) throw std::invalid_argument("partition_windows: window_length must be at least 2");
  if (days < spec.window_length) throw std::invalid_argument("partition_windows: fewer days than one window");
  const Index count = days / spec.window_length;
  std::vector<Window> windows;
  windows.reserve(count);
  for (Index w = 0; w < count; ++w) {
    windows.push_back({w, {w * spec.window_length, (w + 1) * spec.window_length}});
  }
  return windows;
}

namespace {

bool range_all_valid(const ReturnMatrix& returns, TimeRange range) {
  return returns.valid.size() == 0 || returns.valid.middleCols(range.begin, range.length()).all();
}

// Pairwise coefficient over jointly valid days.
std::optional<double> masked_pearson(const ReturnMatrix& returns, Index k, Index l, TimeRange range) {
  std::vector<double> x, y;
  const bool masked = returns.valid.size() != 0;
  for (Index t = range.begin; t < range.end; ++t) {
    if (!masked || (returns.valid(k, t) && returns.valid(l, t))) {
      x.push_back(returns.values(k, t));
      y.push_back(returns.values(l, t));
    }
  }
  using Map = Eigen::Map<const Eigen::VectorXd>;
  return pearson(Map(x.data(), x.size()), Map(y.data(), y.size()));
}

}  // namespace

CorrelationMatrix correlation_matrix(const ReturnMatrix& returns, TimeRange range, Index window_index) {
  if (range.begin < 0 || range.end > returns.days() || range.length() < 2)
    throw std::invalid_argument("correlation_matrix: range must hold at least 2 days inside the series");
  const Index K = returns.stocks();
  CorrelationMatrix out;
  out.window_index = window_index;
  out.values = Eigen::MatrixXd::Identity(K, K);

  if (range_all_valid(returns, range)) {
    const auto block = returns.values.middleCols(range.begin, range.length());
    Eigen::MatrixXd centered = block.colwise() - block.rowwise().mean();
    Eigen::VectorXd norms = centered.rowwise().norm();
    std::vector<bool> constant(K, false);
    for (Index k = 0; k < K; ++k) {
      constant[k] = block.row(k).maxCoeff() == block.row(k).minCoeff();
      if (constant[k]) {
        out.zero_variance.push_back(k);
        centered.row(k).setZero();
      } else {
        centered.row(k) /= norms[k];
      }
    }
    Eigen::MatrixXd gram = centered * centered.transpose();
    for (Index k = 0; k < K; ++k) {
      for (Index l = k + 1; l < K; ++l) {
        const double value = (constant[k] || constant[l]) ? 0.0 : std::clamp(gram(k, l), -1.0, 1.0);
        out.values(k, l) = out.values(l, k) = value;
      }
    }
    return out;
  }

  for (Index k = 0; k < K; ++k) {
    const Index points = returns.valid.row(k).segment(range.begin, range.length()).count();
    if (points < 2) throw std::invalid_argument("correlation_matrix: stock " + returns.tickers[k] +
                                                " has fewer than 2 valid points in range");
  }
  std::vector<bool> flagged(K, false);
  for (Index k = 0; k < K; ++k) {
    for (Index l = k + 1; l < K; ++l) {
      const auto r = masked_pearson(returns, k, l, range);
      out.values(k, l) = out.values(l, k) = r.value_or(0.0);
      if (!r) flagged[k] = flagged[l] = true;
    }
  }
  for (Index k = 0; k < K; ++k)
    if (flagged[k]) out.zero_variance.push_back(k);
  return out;
}

double average_correlation(const ReturnMatrix& returns) {
  const Index K = returns.stocks();
  if (K < 2) throw std::invalid_argument("average_correlation: need at least two stocks");
  const CorrelationMatrix c = correlation_matrix(returns, {0, returns.days()});
  double sum = 0.0;
  for (Index k = 0; k < K; ++k)
    for (Index l = k + 1; l < K; ++l) sum += c.values(k, l);
  return sum / (0.5 * K * (K - 1));
}

double average_correlation(const ReturnMatrix& returns, std::span<const std::pair<Index, Index>> pairs) {
  if (pairs.empty()) throw std::invalid_argument("average_correlation: empty pair set");
  const TimeRange all{0, returns.days()};
  double sum = 0.0;
  for (const auto& [k, l] : pairs) {
    if (k < 0 || l < 0 || k >= returns.stocks() || l >= returns.stocks())
      throw std::out_of_range("average_correlation: pair index out of range");
    if (k == l) {
      sum += 1.0;
      continue;
    }
    sum += masked_pearson(returns, k, l, all).value_or(0.0);
  }
  return sum / static_cast<double>(pairs.size());
}

}  // namespace mktcop
