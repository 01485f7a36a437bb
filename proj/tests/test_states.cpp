#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "mktcop/simulator.hpp"
#include "mktcop/states.hpp"
#include "oracles.hpp"

using namespace mktcop;

namespace mktcop {
void PrintTo(GapReference r, std::ostream* os) { *os << to_string(r); }
}  // namespace mktcop

namespace {

CorrelationMatrix corr(const Eigen::MatrixXd& m) {
  CorrelationMatrix c;
  c.values = m;
  return c;
}

Eigen::MatrixXd random_points(Index n, Index dim, std::uint64_t seed, double spread = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, spread);
  Eigen::MatrixXd p(n, dim);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < dim; ++j) p(i, j) = g(rng);
  return p;
}

Eigen::MatrixXd euclid(const Eigen::MatrixXd& p) {
  Eigen::MatrixXd d(p.rows(), p.rows());
  for (Index i = 0; i < p.rows(); ++i)
    for (Index j = 0; j < p.rows(); ++j) d(i, j) = (p.row(i) - p.row(j)).norm();
  return d;
}

double assignment_cost(const Eigen::MatrixXd& d, const PamResult& r) {
  double cost = 0.0;
  for (Index i = 0; i < d.rows(); ++i) cost += d(i, r.medoids[r.assignment[i]]);
  return cost;
}

// Canonical partition: set of sorted member lists.
std::set<std::vector<Index>> partition_of(const std::vector<int>& labels, const std::vector<Index>& ids) {
  std::map<int, std::vector<Index>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(ids[i]);
  std::set<std::vector<Index>> out;
  for (auto& [label, members] : groups) {
    std::sort(members.begin(), members.end());
    out.insert(members);
  }
  return out;
}

}  // namespace

TEST(DistanceMatrix, Examples) {
  Eigen::Matrix2d a, b;
  a << 1, 0.2, 0.2, 1;
  b << 1, 0.5, 0.5, 1;
  const std::vector<CorrelationMatrix> cs{corr(a), corr(b), corr(a)};
  const Eigen::MatrixXd d = distance_matrix(cs);
  EXPECT_NEAR(d(0, 1), 0.3, 1e-15);
  EXPECT_EQ(d(0, 2), 0.0);
  EXPECT_EQ(d(1, 1), 0.0);
  EXPECT_TRUE(d == d.transpose());
}

TEST(DistanceMatrix, BruteForceRandomPair) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(5, 5), b = a;
  for (int i = 0; i < 5; ++i)
    for (int j = i + 1; j < 5; ++j) {
      a(i, j) = a(j, i) = u(rng);
      b(i, j) = b(j, i) = u(rng);
    }
  double ss = 0.0;
  for (int i = 0; i < 5; ++i)
    for (int j = i + 1; j < 5; ++j) ss += (a(i, j) - b(i, j)) * (a(i, j) - b(i, j));
  const std::vector<CorrelationMatrix> cs{corr(a), corr(b)};
  EXPECT_NEAR(distance_matrix(cs)(0, 1), std::sqrt(ss), 1e-12);
}

TEST(DistanceMatrix, DimensionMismatch) {
  const std::vector<CorrelationMatrix> cs{corr(Eigen::MatrixXd::Identity(2, 2)), corr(Eigen::MatrixXd::Identity(3, 3))};
  EXPECT_THROW(distance_matrix(cs), std::invalid_argument);
}

TEST(Pam, MatchesExhaustiveSearch) {
  for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
    const Eigen::MatrixXd d = euclid(random_points(8, 3, seed));
    for (int k : {1, 2, 3}) {
      const PamResult r = pam(d, k);
      EXPECT_NEAR(r.cost, oracle::best_medoid_cost(d, k), 1e-12) << seed << " k=" << k;
      EXPECT_NEAR(r.cost, assignment_cost(d, r), 1e-12);
    }
  }
}

TEST(Pam, SingleMedoidMinimizesTotalDistance) {
  const Eigen::MatrixXd d = euclid(random_points(15, 4, 9));
  const PamResult r = pam(d, 1);
  Index best = 0;
  d.rowwise().sum().minCoeff(&best);
  EXPECT_EQ(r.medoids[0], best);
}

TEST(Pam, SwapLocalOptimalityAndTrace) {
  const Eigen::MatrixXd d = euclid(random_points(30, 5, 17));
  const int k = 4;
  const PamResult r = pam(d, k);
  for (std::size_t i = 1; i < r.cost_trace.size(); ++i) EXPECT_LE(r.cost_trace[i], r.cost_trace[i - 1]);
  EXPECT_EQ(r.cost_trace.back(), r.cost);
  // No single swap improves the cost.
  std::set<Index> med(r.medoids.begin(), r.medoids.end());
  for (int m = 0; m < k; ++m) {
    for (Index h = 0; h < d.rows(); ++h) {
      if (med.count(h)) continue;
      std::vector<Index> trial = r.medoids;
      trial[m] = h;
      double cost = 0.0;
      for (Index i = 0; i < d.rows(); ++i) {
        double best = INFINITY;
        for (Index c : trial) best = std::min(best, d(i, c));
        cost += best;
      }
      EXPECT_GE(cost, r.cost - 1e-12);
    }
  }
  // Each point sits with its nearest medoid; medoids label themselves.
  for (Index i = 0; i < d.rows(); ++i)
    for (int m = 0; m < k; ++m) EXPECT_LE(d(i, r.medoids[r.assignment[i]]), d(i, r.medoids[m]));
  for (int m = 0; m < k; ++m) EXPECT_EQ(r.assignment[r.medoids[m]], m);
}

TEST(Pam, KEqualsMAndErrors) {
  const Eigen::MatrixXd d = euclid(random_points(6, 2, 5));
  EXPECT_EQ(pam(d, 6).cost, 0.0);
  EXPECT_THROW(pam(d, 7), std::invalid_argument);
  EXPECT_THROW(pam(d, 0), std::invalid_argument);
}

TEST(PamCluster, SeparatedGroupsAndLabelOrder) {
  Eigen::MatrixXd p = random_points(20, 3, 8, 0.1);
  for (Index i = 0; i < 20; i += 2) p.row(i).array() += 10.0;
  const StateModel m = pam_cluster(euclid(p), 2, 99);
  EXPECT_EQ(m.k, 2);
  EXPECT_EQ(m.seed, 99u);
  EXPECT_EQ(m.labels[0], 1);
  for (Index i = 0; i < 20; ++i) EXPECT_EQ(m.labels[i], i % 2 == 0 ? 1 : 2);
  EXPECT_EQ(m.state_sizes(), (std::vector<Index>{10, 10}));
  for (int s = 1; s <= 2; ++s) EXPECT_EQ(m.labels[m.medoids[s - 1]], s);
  EXPECT_EQ(m.distance_name, "euclidean_upper_triangle");
}

TEST(PamCluster, PermutationInvariantPartition) {
  Eigen::MatrixXd p = random_points(24, 3, 21, 0.3);
  for (Index i = 0; i < 24; ++i) p(i, 0) += 3.0 * (i % 3);
  std::vector<Index> ids(24);
  std::iota(ids.begin(), ids.end(), 0);
  std::vector<Index> perm(ids.begin(), ids.end());
  std::mt19937_64 rng(4);
  std::shuffle(perm.begin(), perm.end(), rng);
  Eigen::MatrixXd q(24, 3);
  for (Index i = 0; i < 24; ++i) q.row(i) = p.row(perm[i]);
  const StateModel a = pam_cluster(euclid(p), 3);
  const StateModel b = pam_cluster(euclid(q), 3);
  EXPECT_EQ(partition_of(a.labels, ids), partition_of(b.labels, perm));
}

TEST(WithinDispersion, BruteForce) {
  const Eigen::MatrixXd d = euclid(random_points(10, 2, 31));
  const std::vector<int> a{0, 1, 0, 1, 2, 2, 0, 1, 1, 2};
  double w = 0.0;
  for (int c = 0; c < 3; ++c) {
    double sum = 0.0;
    int size = 0;
    for (int i = 0; i < 10; ++i) {
      if (a[i] != c) continue;
      ++size;
      for (int j = 0; j < 10; ++j)
        if (a[j] == c) sum += d(i, j) * d(i, j);
    }
    w += sum / (2.0 * size);
  }
  EXPECT_NEAR(within_dispersion(d, a), w, 1e-12);
  // One cluster: total scatter about the centroid.
  const Eigen::MatrixXd p = random_points(10, 2, 31);
  const std::vector<int> one(10, 0);
  const double scatter = (p.rowwise() - p.colwise().mean()).squaredNorm();
  EXPECT_NEAR(within_dispersion(euclid(p), one), scatter, 1e-12);
}

class GapReferences : public ::testing::TestWithParam<GapReference> {};

TEST_P(GapReferences, TightBlobSelectsOne) {
  const Eigen::MatrixXd blob = random_points(40, 6, 41, 0.05);
  const GapSelection g = gap_select_k(blob, 8, 50, 7, GetParam());
  EXPECT_EQ(g.k, 1);
  ASSERT_EQ(g.curve.size(), 8u);
  for (const auto& r : g.curve) {
    EXPECT_TRUE(std::isfinite(r.gap));
    EXPECT_GE(r.s_k, 0.0);
  }
}

TEST_P(GapReferences, ThreeGaussianClusters) {
  // Unit-variance clusters of 25, 25 and 50 points centred at (0,0), (0,5), (5,-3).
  Eigen::MatrixXd p = random_points(100, 2, 43);
  for (Index i = 25; i < 50; ++i) p(i, 1) += 5.0;
  for (Index i = 50; i < 100; ++i) p.row(i) += Eigen::RowVector2d(5.0, -3.0);
  EXPECT_EQ(gap_select_k(p, 8, 50, 3, GetParam()).k, 3);
}

INSTANTIATE_TEST_SUITE_P(Both, GapReferences,
                         ::testing::Values(GapReference::bounding_box, GapReference::principal_axes),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(GapStatistic, ReferenceNames) {
  EXPECT_EQ(gap_reference_from_string("bounding_box"), GapReference::bounding_box);
  EXPECT_EQ(gap_reference_from_string(to_string(GapReference::principal_axes)), GapReference::principal_axes);
  EXPECT_THROW(gap_reference_from_string("pca"), std::invalid_argument);
}

TEST(GapStatistic, SimulatedThreeRegimes) {
  RegimeSchedule s;
  s.stocks = 30;
  s.seed = 2024;
  s.segments = {{12 + 10 * 42, 0.05, 60.0}, {10 * 42, 0.45, 60.0}, {10 * 42, 0.85, 60.0}};
  const SimulatedMarket m = simulate_market(s);
  const ReturnMatrix z = local_normalize(compute_returns(m.prices));
  std::vector<CorrelationMatrix> cs;
  for (const auto& w : partition_windows(z.days(), {42})) cs.push_back(correlation_matrix(z, w.range, w.index));
  ASSERT_EQ(cs.size(), 30u);
  const GapSelection g = gap_select_k(upper_triangle_features(cs), 8, 50, 1);
  EXPECT_EQ(g.k, 3);
}

TEST(GapStatistic, DegenerateInputs) {
  const Eigen::MatrixXd same = Eigen::MatrixXd::Ones(5, 3);
  EXPECT_EQ(gap_select_k(same, 4, 10, 0).k, 1);
  EXPECT_THROW(gap_select_k(Eigen::MatrixXd::Ones(1, 3), 4, 10, 0), std::invalid_argument);
  EXPECT_THROW(gap_select_k(random_points(5, 2, 1), 0, 10, 0), std::invalid_argument);
  // k_max is capped below the point count.
  EXPECT_EQ(gap_select_k(random_points(4, 2, 1), 10, 10, 0).curve.size(), 3u);
}

TEST(GapStatistic, Deterministic) {
  const Eigen::MatrixXd p = random_points(25, 4, 77);
  const GapSelection a = gap_select_k(p, 5, 20, 13);
  const GapSelection b = gap_select_k(p, 5, 20, 13);
  for (std::size_t i = 0; i < a.curve.size(); ++i) EXPECT_EQ(a.curve[i].gap, b.curve[i].gap);
}

namespace {

ReturnMatrix ramp_returns(Index stocks, Index days) {
  Eigen::MatrixXd v(stocks, days);
  for (Index k = 0; k < stocks; ++k)
    for (Index t = 0; t < days; ++t) v(k, t) = 1000.0 * k + t;
  std::vector<std::string> tickers, dates;
  for (Index k = 0; k < stocks; ++k) tickers.push_back("S" + std::to_string(k));
  for (Index t = 0; t < days; ++t) dates.push_back(std::to_string(t));
  return make_returns(tickers, dates, v);
}

}  // namespace

TEST(AssembleStateSeries, Concatenation) {
  const ReturnMatrix r = ramp_returns(2, 20);
  const auto windows = partition_windows(20, {4});
  ASSERT_EQ(windows.size(), 5u);
  const std::vector<int> all(5, 1);
  const ReturnMatrix full = assemble_state_series(r, windows, all, 1);
  EXPECT_EQ(full.values, r.values);

  const std::vector<int> alt{1, 2, 1, 2, 2};
  const ReturnMatrix one = assemble_state_series(r, std::span(windows).first(4), std::span(alt).first(4), 1);
  ASSERT_EQ(one.days(), 8);
  for (Index t = 0; t < 4; ++t) {
    EXPECT_EQ(one.values(0, t), t);
    EXPECT_EQ(one.values(0, t + 4), t + 8);
  }
  EXPECT_EQ(one.dates[4], "8");
  Index total = 0;
  for (int s : {1, 2}) total += assemble_state_series(r, windows, alt, s).days();
  EXPECT_EQ(total, 20);
  EXPECT_THROW(assemble_state_series(r, windows, alt, 3), std::invalid_argument);
  EXPECT_THROW(assemble_state_series(r, windows, std::span(alt).first(3), 1), std::invalid_argument);
}

TEST(AssembleStateSeries, RecoversRegimeCorrelation) {
  RegimeSchedule s;
  s.stocks = 20;
  s.seed = 77;
  s.segments = {{12 + 20 * 42, 0.1, 20.0}, {20 * 42, 0.4, 5.0}};
  const SimulatedMarket m = simulate_market(s);
  const ReturnMatrix z = local_normalize(compute_returns(m.prices));
  const auto windows = partition_windows(z.days(), {42});
  const std::vector<int> truth = window_regimes(m.day_regime, 42, 12);
  EXPECT_NEAR(average_correlation(assemble_state_series(z, windows, truth, 1)), 0.1, 0.03);
  EXPECT_NEAR(average_correlation(assemble_state_series(z, windows, truth, 2)), 0.4, 0.03);
}
