#include "mktcop/empirical_copula.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "mktcop/parallel.hpp"

namespace mktcop {

const char* to_string(GridKind kind) {
  switch (kind) {
    case GridKind::empirical: return "empirical";
    case GridKind::analytic: return "analytic";
    case GridKind::difference: return "difference";
  }
  return "unknown";
}

void CopulaGrid::validate(double mass_tolerance, double negative_tolerance) const {
  if (density.rows() == 0 || density.rows() != density.cols()) throw std::invalid_argument("copula grid must be square and non-empty");
  if (!density.allFinite()) throw std::invalid_argument("copula grid has non-finite entries");
  if (density.minCoeff() < -negative_tolerance) throw std::invalid_argument("copula grid has negative density");
  const double m = mass();
  if (std::abs(m - 1.0) > mass_tolerance)
    throw std::invalid_argument("copula grid mass " + std::to_string(m) + " is not 1");
}

namespace {

void check_bins(int bins) {
  if (bins < 1) throw std::invalid_argument("copula histogram: bins must be positive");
}

int bin_of(double u, int bins) {
  const double scaled = u * bins;
  const double nearest = std::round(scaled);
  int a = std::abs(scaled - nearest) < 1e-9 ? static_cast<int>(nearest) : static_cast<int>(std::floor(scaled));
  return std::clamp(a, 0, bins - 1);
}

// Bin of u = (2c - 1) / (2T), exactly.
inline int bin_of_count(Index count, Index T, int bins) {
  return static_cast<int>(((2 * count - 1) * bins) / (2 * T));
}

// Per-pair bin counts, row a = u bin.
using Counts = Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic>;

Counts count_pair(const std::vector<Index>& uc, const std::vector<Index>& vc, int bins) {
  const Index T = static_cast<Index>(uc.size());
  Counts counts = Counts::Zero(bins, bins);
  for (Index t = 0; t < T; ++t) ++counts(bin_of_count(uc[t], T, bins), bin_of_count(vc[t], T, bins));
  return counts;
}

TailStats tails_from_counts(const Counts& counts, Index T) {
  const int bins = static_cast<int>(counts.rows());
  if (bins % 5 != 0) throw std::invalid_argument("tail statistics need a bin count divisible by 5 (use e.g. 20)");
  const int c = bins / 5;
  const int hi = bins - c;
  TailStats s;
  const double n = static_cast<double>(T);
  s.ll = counts.block(0, 0, c, c).sum() / n;
  s.ul = counts.block(hi, 0, c, c).sum() / n;
  s.uu = counts.block(hi, hi, c, c).sum() / n;
  s.lu = counts.block(0, hi, c, c).sum() / n;
  s.alpha = s.uu - s.ll;
  s.beta = s.lu - s.ul;
  return s;
}

CopulaGrid grid_from_counts(const Counts& counts, Index T) {
  const int bins = static_cast<int>(counts.rows());
  CopulaGrid grid;
  grid.density = counts.cast<double>() * (static_cast<double>(bins) * bins / static_cast<double>(T));
  grid.kind = GridKind::empirical;
  grid.pairs = 1;
  return grid;
}

// Rank counts of each stock over the days valid for both k and l.
void joint_ranks(const ReturnMatrix& r, Index k, Index l, std::vector<Index>& uc, std::vector<Index>& vc) {
  std::vector<double> x, y;
  for (Index t = 0; t < r.days(); ++t) {
    if (r.valid(k, t) && r.valid(l, t)) {
      x.push_back(r.values(k, t));
      y.push_back(r.values(l, t));
    }
  }
  using Map = Eigen::Map<const Eigen::VectorXd>;
  uc = rank_counts(Map(x.data(), x.size()));
  vc = rank_counts(Map(y.data(), y.size()));
}

}  // namespace

CopulaGrid pair_copula_histogram(const Eigen::Ref<const Eigen::ArrayXd>& u, const Eigen::Ref<const Eigen::ArrayXd>& v,
                                 int bins) {
  check_bins(bins);
  if (u.size() != v.size()) throw std::invalid_argument("pair_copula_histogram: series lengths differ");
  if (u.size() == 0) throw std::invalid_argument("pair_copula_histogram: empty series");
  Counts counts = Counts::Zero(bins, bins);
  for (Index t = 0; t < u.size(); ++t) {
    if (!(u[t] >= 0.0 && u[t] <= 1.0 && v[t] >= 0.0 && v[t] <= 1.0))
      throw std::invalid_argument("pair_copula_histogram: values must lie in [0, 1]");
    ++counts(bin_of(u[t], bins), bin_of(v[t], bins));
  }
  return grid_from_counts(counts, u.size());
}

CopulaGrid pair_copula_histogram(const std::vector<Index>& u_counts, const std::vector<Index>& v_counts, int bins) {
  check_bins(bins);
  if (u_counts.size() != v_counts.size()) throw std::invalid_argument("pair_copula_histogram: series lengths differ");
  if (u_counts.empty()) throw std::invalid_argument("pair_copula_histogram: empty series");
  return grid_from_counts(count_pair(u_counts, v_counts, bins), static_cast<Index>(u_counts.size()));
}

TailStats tail_corner_masses(const CopulaGrid& grid) {
  const int bins = grid.bins();
  if (bins == 0 || bins % 5 != 0)
    throw std::invalid_argument("tail_corner_masses: bins must be divisible by 5 so 0.2 falls on a bin edge (use e.g. 20)");
  const int c = bins / 5;
  const int hi = bins - c;
  const double area = 1.0 / (static_cast<double>(bins) * bins);
  TailStats s;
  s.ll = grid.density.block(0, 0, c, c).sum() * area;
  s.ul = grid.density.block(hi, 0, c, c).sum() * area;
  s.uu = grid.density.block(hi, hi, c, c).sum() * area;
  s.lu = grid.density.block(0, hi, c, c).sum() * area;
  s.alpha = s.uu - s.ll;
  s.beta = s.lu - s.ul;
  return s;
}

TailStats tail_corner_masses(const Eigen::Ref<const Eigen::ArrayXd>& u, const Eigen::Ref<const Eigen::ArrayXd>& v) {
  return tail_corner_masses(pair_copula_histogram(u, v, 20));
}

Dispersion dispersion(std::span<const double> values) {
  Dispersion d;
  const double n = static_cast<double>(values.size());
  if (values.empty()) return d;
  for (double x : values) d.mean += x;
  d.mean /= n;
  double ss = 0.0;
  for (double x : values) ss += (x - d.mean) * (x - d.mean);
  d.sd_population = std::sqrt(ss / n);
  d.sd_sample = values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  return d;
}

StateCopulaAnalysis analyze_state_pairs(const ReturnMatrix& returns, int bins) {
  check_bins(bins);
  const Index K = returns.stocks();
  if (K < 2) throw std::invalid_argument("state copula: need at least two stocks");
  if (returns.days() < 1) throw std::invalid_argument("state copula: empty series");
  const bool tails = bins % 5 == 0;
  const bool masked = !returns.all_valid();

  std::vector<std::vector<Index>> ranks;
  if (!masked) {
    ranks.resize(K);
    for (Index k = 0; k < K; ++k) ranks[k] = rank_counts(returns.values.row(k));
  }

  // One partial grid per first index, reduced in order afterwards.
  std::vector<Eigen::MatrixXd> partial(K - 1);
  std::vector<std::vector<PairTail>> partial_tails(K - 1);
  parallel_for(static_cast<std::size_t>(K - 1), [&](std::size_t ki) {
    const Index k = static_cast<Index>(ki);
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(bins, bins);
    std::vector<Index> uc, vc;
    for (Index l = k + 1; l < K; ++l) {
      const std::vector<Index>* u = nullptr;
      const std::vector<Index>* v = nullptr;
      if (masked) {
        joint_ranks(returns, k, l, uc, vc);
        if (uc.empty()) throw std::invalid_argument("state copula: pair " + returns.tickers[k] + "/" + returns.tickers[l] +
                                                    " has no jointly valid days");
        u = &uc;
        v = &vc;
      } else {
        u = &ranks[k];
        v = &ranks[l];
      }
      const Index T = static_cast<Index>(u->size());
      const Counts counts = count_pair(*u, *v, bins);
      sum += counts.cast<double>() * (static_cast<double>(bins) * bins / static_cast<double>(T));
      if (tails) partial_tails[k].push_back({k, l, tails_from_counts(counts, T)});
    }
    partial[k] = std::move(sum);
  });

  StateCopulaAnalysis out;
  Eigen::MatrixXd total = Eigen::MatrixXd::Zero(bins, bins);
  for (const auto& p : partial) total += p;
  const Index pairs = K * (K - 1) / 2;
  out.average.density = total / static_cast<double>(pairs);
  out.average.kind = GridKind::empirical;
  out.average.pairs = pairs;

  if (tails) {
    out.asymmetry.pairs.reserve(pairs);
    for (auto& p : partial_tails) out.asymmetry.pairs.insert(out.asymmetry.pairs.end(), p.begin(), p.end());
    std::vector<double> alphas, betas;
    alphas.reserve(pairs);
    betas.reserve(pairs);
    for (const auto& p : out.asymmetry.pairs) {
      alphas.push_back(p.stats.alpha);
      betas.push_back(p.stats.beta);
    }
    out.asymmetry.alpha = dispersion(alphas);
    out.asymmetry.beta = dispersion(betas);
  }
  return out;
}

CopulaGrid state_average_copula(const ReturnMatrix& returns, int bins) { return analyze_state_pairs(returns, bins).average; }

AsymmetryStats state_asymmetry(const ReturnMatrix& returns, int bins) {
  if (bins % 5 != 0) throw std::invalid_argument("state_asymmetry: bins must be divisible by 5 (use e.g. 20)");
  return analyze_state_pairs(returns, bins).asymmetry;
}

std::vector<Index> value_histogram(std::span<const double> values, double lo, double hi, int bins) {
  if (bins < 1 || !(hi > lo)) throw std::invalid_argument("value_histogram: bad range or bin count");
  std::vector<Index> counts(bins, 0);
  for (double x : values) {
    const int b = static_cast<int>(std::floor((x - lo) / (hi - lo) * bins));
    ++counts[std::clamp(b, 0, bins - 1)];
  }
  return counts;
}

}  // namespace mktcop
