#include "mktcop/states.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "mktcop/parallel.hpp"
#include "mktcop/random.hpp"

namespace mktcop {

std::vector<Index> StateModel::state_sizes() const {
  std::vector<Index> sizes(k, 0);
  for (int label : labels) ++sizes.at(label - 1);
  return sizes;
}

Eigen::MatrixXd upper_triangle_features(std::span<const CorrelationMatrix> correlations) {
  if (correlations.empty()) return {};
  const Index K = correlations.front().values.rows();
  const Index D = K * (K - 1) / 2;
  Eigen::MatrixXd features(correlations.size(), D);
  for (std::size_t m = 0; m < correlations.size(); ++m) {
    const auto& c = correlations[m].values;
    if (c.rows() != K || c.cols() != K) throw std::invalid_argument("distance_matrix: correlation matrix dimension mismatch");
    Index d = 0;
    for (Index k = 0; k < K; ++k)
      for (Index l = k + 1; l < K; ++l) features(m, d++) = c(k, l);
  }
  return features;
}

Eigen::MatrixXd pairwise_distances(const Eigen::MatrixXd& points) {
  const Index M = points.rows();
  const Eigen::MatrixXd columns = points.transpose();
  Eigen::MatrixXd distances = Eigen::MatrixXd::Zero(M, M);
  parallel_for(static_cast<std::size_t>(M), [&](std::size_t i) {
    for (Index j = static_cast<Index>(i) + 1; j < M; ++j) {
      distances(i, j) = (columns.col(i) - columns.col(j)).norm();
    }
  });
  distances.triangularView<Eigen::StrictlyLower>() = distances.transpose();
  return distances;
}

Eigen::MatrixXd distance_matrix(std::span<const CorrelationMatrix> correlations) {
  return pairwise_distances(upper_triangle_features(correlations));
}

namespace {

void check_distances(const Eigen::MatrixXd& distances) {
  if (distances.rows() != distances.cols()) throw std::invalid_argument("pam: distance matrix must be square");
}

// Nearest medoid slot, its distance, and the second-nearest distance.
struct Nearest {
  std::vector<int> slot;
  std::vector<double> first;
  std::vector<double> second;
};

Nearest nearest_medoids(const Eigen::MatrixXd& d, const std::vector<Index>& medoids) {
  const Index M = d.rows();
  Nearest out{std::vector<int>(M, 0), std::vector<double>(M), std::vector<double>(M)};
  for (Index j = 0; j < M; ++j) {
    int own = -1;
    for (std::size_t s = 0; s < medoids.size(); ++s)
      if (medoids[s] == j) own = static_cast<int>(s);
    double best = std::numeric_limits<double>::infinity();
    double next = std::numeric_limits<double>::infinity();
    int best_slot = -1;
    for (std::size_t s = 0; s < medoids.size(); ++s) {
      const double dist = d(j, medoids[s]);
      bool take = false;
      if (best_slot < 0) {
        take = true;
      } else if (own >= 0) {
        take = static_cast<int>(s) == own;
      } else {
        take = dist < best || (dist == best && medoids[s] < medoids[best_slot]);
      }
      if (take) {
        next = std::min(next, best);
        best = dist;
        best_slot = static_cast<int>(s);
      } else {
        next = std::min(next, dist);
      }
    }
    out.slot[j] = best_slot;
    out.first[j] = best;
    out.second[j] = next;
  }
  return out;
}

}  // namespace

PamResult pam(const Eigen::MatrixXd& d, int k) {
  check_distances(d);
  const Index M = d.rows();
  if (k < 1 || k > M) throw std::invalid_argument("pam: k must lie in [1, number of points]");

  // BUILD
  std::vector<Index> medoids;
  std::vector<bool> is_medoid(M, false);
  std::vector<double> nearest(M, std::numeric_limits<double>::infinity());
  {
    Index first = 0;
    double best = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < M; ++i) {
      const double total = d.row(i).sum();
      if (total < best) {
        best = total;
        first = i;
      }
    }
    medoids.push_back(first);
    is_medoid[first] = true;
    for (Index j = 0; j < M; ++j) nearest[j] = d(j, first);
  }
  while (static_cast<int>(medoids.size()) < k) {
    Index pick = -1;
    double best_gain = -1.0;
    for (Index i = 0; i < M; ++i) {
      if (is_medoid[i]) continue;
      double gain = 0.0;
      for (Index j = 0; j < M; ++j) gain += std::max(nearest[j] - d(j, i), 0.0);
      if (gain > best_gain) {
        best_gain = gain;
        pick = i;
      }
    }
    medoids.push_back(pick);
    is_medoid[pick] = true;
    for (Index j = 0; j < M; ++j) nearest[j] = std::min(nearest[j], d(j, pick));
  }

  PamResult result;
  Nearest near = nearest_medoids(d, medoids);
  double cost = std::accumulate(near.first.begin(), near.first.end(), 0.0);
  result.cost_trace.push_back(cost);

  // SWAP
  const double threshold = 1e-12 * std::max(1.0, cost);
  for (int iteration = 0; iteration < 10000; ++iteration) {
    double best_delta = 0.0;
    int best_slot = -1;
    Index best_candidate = -1;
    for (int s = 0; s < k; ++s) {
      for (Index h = 0; h < M; ++h) {
        if (is_medoid[h]) continue;
        double delta = 0.0;
        for (Index j = 0; j < M; ++j) {
          const double to_h = d(j, h);
          if (near.slot[j] == s) {
            delta += std::min(to_h, near.second[j]) - near.first[j];
          } else if (to_h < near.first[j]) {
            delta += to_h - near.first[j];
          }
        }
        if (delta < best_delta - threshold) {
          best_delta = delta;
          best_slot = s;
          best_candidate = h;
        }
      }
    }
    if (best_slot < 0) break;
    is_medoid[medoids[best_slot]] = false;
    medoids[best_slot] = best_candidate;
    is_medoid[best_candidate] = true;
    near = nearest_medoids(d, medoids);
    cost = std::accumulate(near.first.begin(), near.first.end(), 0.0);
    result.cost_trace.push_back(cost);
  }

  result.medoids = medoids;
  result.assignment = near.slot;
  result.cost = cost;
  return result;
}

StateModel pam_cluster(const Eigen::MatrixXd& distances, int k, std::uint64_t seed) {
  const PamResult raw = pam(distances, k);
  StateModel model;
  model.k = k;
  model.seed = seed;
  model.cost = raw.cost;
  model.distance_name = kUpperTriangleDistance;
  std::vector<int> renumber(k, 0);
  int next = 1;
  model.labels.resize(raw.assignment.size());
  for (std::size_t w = 0; w < raw.assignment.size(); ++w) {
    int& id = renumber[raw.assignment[w]];
    if (id == 0) id = next++;
    model.labels[w] = id;
  }
  model.medoids.assign(k, 0);
  for (int s = 0; s < k; ++s) model.medoids[renumber[s] - 1] = raw.medoids[s];
  return model;
}

double within_dispersion(const Eigen::MatrixXd& distances, std::span<const int> assignment) {
  const Index M = distances.rows();
  if (static_cast<Index>(assignment.size()) != M) throw std::invalid_argument("within_dispersion: size mismatch");
  const int clusters = assignment.empty() ? 0 : *std::max_element(assignment.begin(), assignment.end()) + 1;
  std::vector<double> sums(clusters, 0.0);
  std::vector<Index> sizes(clusters, 0);
  for (Index i = 0; i < M; ++i) {
    ++sizes[assignment[i]];
    for (Index j = 0; j < M; ++j) {
      if (assignment[i] == assignment[j]) sums[assignment[i]] += distances(i, j) * distances(i, j);
    }
  }
  double w = 0.0;
  for (int c = 0; c < clusters; ++c)
    if (sizes[c] > 0) w += sums[c] / (2.0 * sizes[c]);
  return w;
}

const char* to_string(GapReference reference) {
  return reference == GapReference::bounding_box ? "bounding_box" : "principal_axes";
}

GapReference gap_reference_from_string(std::string_view name) {
  if (name == "bounding_box") return GapReference::bounding_box;
  if (name == "principal_axes") return GapReference::principal_axes;
  throw std::invalid_argument("unknown gap reference '" + std::string(name) + "'");
}

namespace {

// Coordinates whose box the references are drawn in. Principal coordinates
// come from the Gram matrix, so the cost is M x M whatever the feature width.
Eigen::MatrixXd reference_frame(const Eigen::MatrixXd& features, GapReference reference) {
  if (reference == GapReference::bounding_box) return features;
  const Eigen::MatrixXd centered = features.rowwise() - features.colwise().mean();
  const Eigen::MatrixXd gram = centered * centered.transpose();
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  const Eigen::VectorXd lambda = eig.eigenvalues();
  const double cut = 1e-12 * std::max(lambda.maxCoeff(), 0.0);
  std::vector<Index> keep;
  for (Index i = lambda.size() - 1; i >= 0; --i)
    if (lambda[i] > cut) keep.push_back(i);
  Eigen::MatrixXd frame(features.rows(), std::max<Index>(static_cast<Index>(keep.size()), 1));
  frame.setZero();
  for (std::size_t j = 0; j < keep.size(); ++j) frame.col(j) = eig.eigenvectors().col(keep[j]) * std::sqrt(lambda[keep[j]]);
  return frame;
}

}  // namespace

GapSelection gap_select_k(const Eigen::MatrixXd& features, int k_max, int references, std::uint64_t seed,
                          GapReference reference) {
  return gap_select_k(features, pairwise_distances(features), k_max, references, seed, reference);
}

GapSelection gap_select_k(const Eigen::MatrixXd& features, const Eigen::MatrixXd& distances, int k_max,
                          int references, std::uint64_t seed, GapReference reference) {
  const Index M = features.rows();
  if (k_max < 1) throw std::invalid_argument("gap_select_k: k_max must be at least 1");
  if (M < 2) throw std::invalid_argument("gap_select_k: need at least two points");
  if (references < 1) throw std::invalid_argument("gap_select_k: need at least one reference set");
  if (distances.rows() != M || distances.cols() != M) throw std::invalid_argument("gap_select_k: distance shape mismatch");

  GapSelection selection;
  if (distances.maxCoeff() == 0.0) {
    selection.k = 1;
    selection.curve.push_back({1, 0.0, 0.0, 0.0});
    return selection;
  }

  const int k_top = std::min<int>(k_max, static_cast<int>(M) - 1 > 0 ? static_cast<int>(M) - 1 : 1);
  constexpr double kFloor = std::numeric_limits<double>::min();

  std::vector<double> log_w(k_top);
  for (int k = 1; k <= k_top; ++k) {
    const PamResult fit = pam(distances, k);
    log_w[k - 1] = std::log(std::max(within_dispersion(distances, fit.assignment), kFloor));
  }

  const Eigen::MatrixXd frame = reference_frame(features, reference);
  const Eigen::RowVectorXd lo = frame.colwise().minCoeff();
  const Eigen::RowVectorXd span = frame.colwise().maxCoeff() - lo;
  Eigen::MatrixXd reference_log_w(references, k_top);
  // Serial over references; distance computation inside is parallel.
  for (int b = 0; b < references; ++b) {
    Engine engine(derive_seed(seed, static_cast<std::uint64_t>(b)));
    Eigen::MatrixXd sample(M, frame.cols());
    for (Index j = 0; j < sample.cols(); ++j)
      for (Index i = 0; i < M; ++i) sample(i, j) = lo[j] + span[j] * uniform01(engine);
    const Eigen::MatrixXd ref_distances = pairwise_distances(sample);
    for (int k = 1; k <= k_top; ++k) {
      const PamResult fit = pam(ref_distances, k);
      reference_log_w(b, k - 1) = std::log(std::max(within_dispersion(ref_distances, fit.assignment), kFloor));
    }
  }

  for (int k = 1; k <= k_top; ++k) {
    const auto column = reference_log_w.col(k - 1).array();
    const double mean = column.mean();
    const double sd = std::sqrt((column - mean).square().mean());
    selection.curve.push_back({k, mean - log_w[k - 1], sd * std::sqrt(1.0 + 1.0 / references), std::exp(log_w[k - 1])});
  }
  selection.k = k_top;
  for (int k = 1; k < k_top; ++k) {
    if (selection.curve[k - 1].gap >= selection.curve[k].gap - selection.curve[k].s_k) {
      selection.k = k;
      break;
    }
  }
  return selection;
}

ReturnMatrix assemble_state_series(const ReturnMatrix& returns, std::span<const Window> windows,
                                   std::span<const int> labels, int state) {
  if (labels.size() != windows.size()) throw std::invalid_argument("assemble_state_series: labels must cover all windows");
  std::vector<const Window*> chosen;
  Index days = 0;
  for (std::size_t w = 0; w < windows.size(); ++w) {
    if (labels[w] == state) {
      chosen.push_back(&windows[w]);
      days += windows[w].range.length();
    }
  }
  if (chosen.empty()) throw std::invalid_argument("assemble_state_series: state " + std::to_string(state) + " has no windows");

  ReturnMatrix out;
  out.tickers = returns.tickers;
  out.kind = returns.kind;
  out.values.resize(returns.stocks(), days);
  out.valid.resize(returns.stocks(), days);
  Index offset = 0;
  for (const Window* w : chosen) {
    const Index len = w->range.length();
    if (w->range.begin < 0 || w->range.end > returns.days()) throw std::out_of_range("assemble_state_series: window outside series");
    out.values.middleCols(offset, len) = returns.values.middleCols(w->range.begin, len);
    out.valid.middleCols(offset, len) = returns.valid.size() ? BoolArray(returns.valid.middleCols(w->range.begin, len))
                                                             : BoolArray::Constant(returns.stocks(), len, true);
    out.dates.insert(out.dates.end(), returns.dates.begin() + w->range.begin, returns.dates.begin() + w->range.end);
    offset += len;
  }
  out.excluded.assign(out.stocks(), 0);
  for (Index k = 0; k < out.stocks(); ++k) out.excluded[k] = (!out.valid.row(k)).count();
  return out;
}

}  // namespace mktcop
