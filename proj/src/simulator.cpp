#include "mktcop/simulator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

#include "mktcop/parallel.hpp"

namespace mktcop {

namespace {

constexpr Index kChunkDays = 2048;

Eigen::MatrixXd cholesky_factor(const Eigen::MatrixXd& sigma) {
  if (sigma.rows() == 0 || sigma.rows() != sigma.cols()) throw std::invalid_argument("covariance must be square and non-empty");
  if (!sigma.isApprox(sigma.transpose(), 1e-12)) throw std::invalid_argument("covariance must be symmetric");
  const Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("covariance must be positive definite");
  return llt.matrixL();
}

// Draws one day: sqrt(2z/N) * L * xi.
struct DayDrawer {
  const Eigen::MatrixXd& factor;
  double N;
  std::gamma_distribution<double> gamma;
  std::normal_distribution<double> normal{0.0, 1.0};
  Eigen::VectorXd xi;

  DayDrawer(const Eigen::MatrixXd& l, double n) : factor(l), N(n), gamma(0.5 * n, 1.0), xi(l.rows()) {}

  template <class Out>
  void draw(Engine& engine, Out&& out) {
    const double z = gamma(engine);
    for (Index k = 0; k < xi.size(); ++k) xi[k] = normal(engine);
    out.noalias() = factor.triangularView<Eigen::Lower>() * xi;
    out *= std::sqrt(2.0 * z / N);
  }
};

void check_N(double N) {
  if (!(N > 0.0) || !std::isfinite(N)) throw std::invalid_argument("N must be positive and finite");
}

}  // namespace

Index RegimeSchedule::total_days() const {
  Index total = 0;
  for (const auto& s : segments) total += s.days;
  return total;
}

void RegimeSchedule::validate() const {
  if (stocks < 1) throw std::invalid_argument("regime schedule: need at least one stock");
  if (segments.empty()) throw std::invalid_argument("regime schedule: no segments");
  for (const auto& s : segments) {
    if (s.days < 1) throw std::invalid_argument("regime schedule: segment length must be at least 1");
    if (!(std::abs(s.c) < 1.0)) throw std::invalid_argument("regime schedule: |c| must be below 1");
    check_N(s.N);
    if (!(s.volatility > 0.0)) throw std::invalid_argument("regime schedule: volatility must be positive");
    if (!s.stock_volatility.empty()) {
      if (static_cast<Index>(s.stock_volatility.size()) != stocks)
        throw std::invalid_argument("regime schedule: per-stock volatility must have one entry per stock");
      for (double v : s.stock_volatility)
        if (!(v > 0.0)) throw std::invalid_argument("regime schedule: volatility must be positive");
    }
  }
}

Eigen::MatrixXd equicorrelation(Index stocks, double c) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Constant(stocks, stocks, c);
  m.diagonal().setOnes();
  return m;
}

Eigen::MatrixXd sample_k_returns(const Eigen::MatrixXd& sigma, double N, Index days, std::uint64_t seed) {
  check_N(N);
  if (days < 0) throw std::invalid_argument("sample_k_returns: negative day count");
  const Eigen::MatrixXd factor = cholesky_factor(sigma);
  Eigen::MatrixXd out(sigma.rows(), days);
  const Index chunks = (days + kChunkDays - 1) / kChunkDays;
  parallel_for(static_cast<std::size_t>(chunks), [&](std::size_t chunk) {
    Engine engine(derive_seed(seed, chunk));
    DayDrawer drawer(factor, N);
    const Index begin = static_cast<Index>(chunk) * kChunkDays;
    const Index end = std::min(days, begin + kChunkDays);
    for (Index t = begin; t < end; ++t) drawer.draw(engine, out.col(t));
  });
  return out;
}

ReturnMatrix sample_k_return_matrix(const Eigen::MatrixXd& sigma, double N, Index days, std::uint64_t seed) {
  std::vector<std::string> tickers;
  for (Index k = 0; k < sigma.rows(); ++k) tickers.push_back("S" + std::to_string(k + 1));
  return make_returns(std::move(tickers), business_dates(days), sample_k_returns(sigma, N, days, seed));
}

Eigen::MatrixXd sample_wishart_model_matrix(const Eigen::MatrixXd& sigma, int N, Engine& engine) {
  if (N < 1) throw std::invalid_argument("sample_wishart_model_matrix: N must be a positive integer");
  const Eigen::MatrixXd factor = cholesky_factor(sigma);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd xi(sigma.rows(), N);
  for (Index j = 0; j < N; ++j)
    for (Index k = 0; k < xi.rows(); ++k) xi(k, j) = normal(engine);
  Eigen::MatrixXd a = factor.triangularView<Eigen::Lower>() * xi;
  return a / std::sqrt(static_cast<double>(N));
}

Eigen::MatrixXd sample_wishart_model_matrix(const Eigen::MatrixXd& sigma, double N, std::uint64_t seed) {
  if (!(N >= 1.0) || N != std::floor(N) || N > 1e9)
    throw std::invalid_argument("sample_wishart_model_matrix: N must be a positive integer");
  Engine engine(seed);
  return sample_wishart_model_matrix(sigma, static_cast<int>(N), engine);
}

Eigen::MatrixXd sample_wishart_returns(const Eigen::MatrixXd& sigma, int N, Index days, std::uint64_t seed) {
  if (N < 1) throw std::invalid_argument("sample_wishart_returns: N must be a positive integer");
  const Eigen::MatrixXd factor = cholesky_factor(sigma);
  const Index K = sigma.rows();
  Eigen::MatrixXd out(K, days);
  const Index chunks = (days + kChunkDays - 1) / kChunkDays;
  parallel_for(static_cast<std::size_t>(chunks), [&](std::size_t chunk) {
    Engine engine(derive_seed(seed, chunk));
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd xi(K, N);
    Eigen::VectorXd eta(N), y(K);
    const Index begin = static_cast<Index>(chunk) * kChunkDays;
    const Index end = std::min(days, begin + kChunkDays);
    for (Index t = begin; t < end; ++t) {
      for (Index j = 0; j < N; ++j)
        for (Index k = 0; k < K; ++k) xi(k, j) = normal(engine);
      // A = L xi / sqrt(N); r = A eta with eta ~ N(0, I) gives r ~ N(0, A A^T).
      for (Index j = 0; j < N; ++j) eta[j] = normal(engine);
      y = xi * eta / std::sqrt(static_cast<double>(N));
      out.col(t) = factor.triangularView<Eigen::Lower>() * y;
    }
  });
  return out;
}

std::vector<std::string> business_dates(Index count) {
  using namespace std::chrono;
  std::vector<std::string> dates;
  dates.reserve(count);
  sys_days day = sys_days{year{2000} / January / 3};
  while (static_cast<Index>(dates.size()) < count) {
    const weekday wd{day};
    if (wd != Saturday && wd != Sunday) {
      const year_month_day ymd{day};
      char buffer[16];
      std::snprintf(buffer, sizeof buffer, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                    static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
      dates.emplace_back(buffer);
    }
    day += days{1};
  }
  return dates;
}

SimulatedMarket simulate_market(const RegimeSchedule& schedule) {
  schedule.validate();
  const Index K = schedule.stocks;
  const Index T = schedule.total_days();
  Eigen::MatrixXd returns(K, T);
  SimulatedMarket market;
  market.day_regime.resize(T);

  struct Chunk {
    std::size_t segment;
    Index begin, end, ordinal;
  };
  std::vector<Chunk> chunks;
  std::vector<Eigen::MatrixXd> factors;
  Index offset = 0;
  for (std::size_t s = 0; s < schedule.segments.size(); ++s) {
    const RegimeSegment& seg = schedule.segments[s];
    Eigen::VectorXd vol = seg.stock_volatility.empty()
                              ? Eigen::VectorXd::Constant(K, seg.volatility)
                              : Eigen::Map<const Eigen::VectorXd>(seg.stock_volatility.data(), K).eval();
    const Eigen::MatrixXd sigma = vol.asDiagonal() * equicorrelation(K, seg.c) * vol.asDiagonal();
    factors.push_back(cholesky_factor(sigma));
    Index ordinal = 0;
    for (Index b = 0; b < seg.days; b += kChunkDays) chunks.push_back({s, offset + b, offset + std::min(seg.days, b + kChunkDays), ordinal++});
    for (Index t = 0; t < seg.days; ++t) market.day_regime[offset + t] = static_cast<int>(s) + 1;
    offset += seg.days;
  }

  std::vector<Index> redraws(chunks.size(), 0);
  std::vector<char> aborted(chunks.size(), 0);
  parallel_for(chunks.size(), [&](std::size_t c) {
    const Chunk& chunk = chunks[c];
    Engine engine(derive_seed(derive_seed(schedule.seed, chunk.segment), static_cast<std::uint64_t>(chunk.ordinal)));
    DayDrawer drawer(factors[chunk.segment], schedule.segments[chunk.segment].N);
    const Index limit = std::max<Index>(1, (chunk.end - chunk.begin) / 100);
    for (Index t = chunk.begin; t < chunk.end; ++t) {
      drawer.draw(engine, returns.col(t));
      while (returns.col(t).cwiseAbs().maxCoeff() >= 1.0) {
        if (++redraws[c] > limit) {
          aborted[c] = 1;
          return;
        }
        drawer.draw(engine, returns.col(t));
      }
    }
  });
  for (Index r : redraws) market.resampled += r;
  const bool any_aborted = std::find(aborted.begin(), aborted.end(), 1) != aborted.end();
  if (any_aborted || static_cast<double>(market.resampled) > 0.001 * static_cast<double>(T)) {
    throw std::runtime_error("simulate_market: " + std::to_string(market.resampled) + " of " + std::to_string(T) +
                             " days needed redrawing (|r| >= 1); lower the volatility");
  }

  market.prices.tickers.reserve(K);
  for (Index k = 0; k < K; ++k) {
    char buffer[32];
    std::snprintf(buffer, sizeof buffer, "SIM%03ld", static_cast<long>(k + 1));
    market.prices.tickers.emplace_back(buffer);
  }
  market.prices.dates = business_dates(T + 1);
  market.prices.values.resize(K, T + 1);
  market.prices.values.col(0).setConstant(100.0);
  for (Index t = 0; t < T; ++t) {
    market.prices.values.col(t + 1) = market.prices.values.col(t).cwiseProduct((1.0 + returns.col(t).array()).matrix());
  }
  return market;
}

std::vector<int> window_regimes(const std::vector<int>& day_regime, Index window_length, Index offset) {
  if (window_length < 1 || offset < 0) throw std::invalid_argument("window_regimes: bad window layout");
  const Index usable = static_cast<Index>(day_regime.size()) - offset;
  std::vector<int> labels;
  for (Index w = 0; usable > 0 && (w + 1) * window_length <= usable; ++w) {
    std::map<int, Index> votes;
    for (Index t = 0; t < window_length; ++t) ++votes[day_regime[offset + w * window_length + t]];
    int best = 0;
    Index best_votes = -1;
    for (const auto& [regime, count] : votes) {
      if (count > best_votes) {
        best = regime;
        best_votes = count;
      }
    }
    labels.push_back(best);
  }
  return labels;
}

}  // namespace mktcop
