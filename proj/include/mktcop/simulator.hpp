#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "mktcop/random.hpp"
#include "mktcop/timeseries.hpp"

namespace mktcop {

/// One stretch of days drawn from a K-distribution with equicorrelation c.
struct RegimeSegment {
  Index days = 0;
  double c = 0.0;
  double N = 5.0;
  double volatility = 0.01;                // daily return scale for every stock
  std::vector<double> stock_volatility{};  // optional per-stock override, size K
};

struct RegimeSchedule {
  std::vector<RegimeSegment> segments;
  Index stocks = 0;
  std::uint64_t seed = 0;

  Index total_days() const;
  void validate() const;
};

/// Unit-diagonal matrix with every off-diagonal entry c.
Eigen::MatrixXd equicorrelation(Index stocks, double c);

/// T independent K-vectors: z ~ Gamma(N/2, 1), r ~ N(0, (2z/N) sigma).
/// Drawn in fixed-size chunks with derived seeds so results do not depend
/// on the thread count.
Eigen::MatrixXd sample_k_returns(const Eigen::MatrixXd& sigma, double N, Index days, std::uint64_t seed);

/// Same draws wrapped as an original-kind ReturnMatrix with synthetic names.
ReturnMatrix sample_k_return_matrix(const Eigen::MatrixXd& sigma, double N, Index days, std::uint64_t seed);

/// K x N model matrix with i.i.d. columns N(0, sigma / N); E[A A^T] = sigma.
Eigen::MatrixXd sample_wishart_model_matrix(const Eigen::MatrixXd& sigma, int N, Engine& engine);

/// Seeded variant; rejects non-integer N.
Eigen::MatrixXd sample_wishart_model_matrix(const Eigen::MatrixXd& sigma, double N, std::uint64_t seed);

/// Returns generated through explicit Wishart model matrices:
/// r(t) ~ N(0, A_t A_t^T) with a fresh A_t per day.
Eigen::MatrixXd sample_wishart_returns(const Eigen::MatrixXd& sigma, int N, Index days, std::uint64_t seed);

struct SimulatedMarket {
  PriceMatrix prices;
  std::vector<int> day_regime;  // regime id (1-based segment index) per return day
  Index resampled = 0;          // days redrawn because some |r| >= 1
};

/// Prices from compounded simple returns starting at 100, with business-day
/// dates from 2000-01-03. Aborts if more than 0.1% of days need redrawing.
SimulatedMarket simulate_market(const RegimeSchedule& schedule);

/// Majority regime per analysis window. Windows start `offset` return days
/// in (the local normalization drop) and have `window_length` days.
std::vector<int> window_regimes(const std::vector<int>& day_regime, Index window_length, Index offset);

/// Consecutive weekdays starting at 2000-01-03, ISO-8601.
std::vector<std::string> business_dates(Index count);

}  // namespace mktcop
