#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mktcop/timeseries.hpp"

namespace mktcop {

inline constexpr const char* kUpperTriangleDistance = "euclidean_upper_triangle";

/// Clustering of windows into market states. Labels run 1..k and are
/// numbered by first appearance along the window sequence.
struct StateModel {
  int k = 0;
  std::vector<Index> medoids;  // window index of each state's medoid, by state id
  std::vector<int> labels;     // one per window
  std::string distance_name = kUpperTriangleDistance;
  std::uint64_t seed = 0;
  double cost = 0.0;  // total window-to-medoid distance

  /// Window count per state id (index 0 is state 1).
  std::vector<Index> state_sizes() const;
};

struct GapRecord {
  int k = 0;
  double gap = 0.0;
  double s_k = 0.0;
  double w_k = 0.0;
};

using GapCurve = std::vector<GapRecord>;

/// Each row is the strict upper triangle of one matrix, row-major.
Eigen::MatrixXd upper_triangle_features(std::span<const CorrelationMatrix> correlations);

/// Euclidean distances between rows.
Eigen::MatrixXd pairwise_distances(const Eigen::MatrixXd& points);

/// d(i, j) = || triu(C_i) - triu(C_j) ||_2 over strict upper triangles.
Eigen::MatrixXd distance_matrix(std::span<const CorrelationMatrix> correlations);

/// Raw k-medoids outcome; clusters indexed 0..k-1 in medoid order.
struct PamResult {
  std::vector<Index> medoids;
  std::vector<int> assignment;
  double cost = 0.0;
  std::vector<double> cost_trace;  // after BUILD and after each accepted swap
};

/// BUILD + steepest-descent SWAP. Ties go to the lowest index.
PamResult pam(const Eigen::MatrixXd& distances, int k);

/// pam() with labels renumbered 1..k by first appearance.
StateModel pam_cluster(const Eigen::MatrixXd& distances, int k, std::uint64_t seed = 0);

/// W_k = sum over clusters of (sum of ordered within-cluster pairs d^2) / (2 |C|).
double within_dispersion(const Eigen::MatrixXd& distances, std::span<const int> assignment);

/// Reference distribution of the gap statistic: uniform over the
/// coordinate bounding box of the features, or over the box aligned with
/// their principal axes.
enum class GapReference { bounding_box, principal_axes };

const char* to_string(GapReference reference);
GapReference gap_reference_from_string(std::string_view name);

struct GapSelection {
  int k = 1;
  GapCurve curve;
};

/// Gap statistic over k = 1..k_max with `references` uniform reference sets
/// (rows of `features` are points). k_max is capped at M-1 so the data
/// dispersion stays positive.
GapSelection gap_select_k(const Eigen::MatrixXd& features, int k_max, int references = 50,
                          std::uint64_t seed = 0, GapReference reference = GapReference::principal_axes);

/// Same, reusing a precomputed data distance matrix.
GapSelection gap_select_k(const Eigen::MatrixXd& features, const Eigen::MatrixXd& distances, int k_max,
                          int references, std::uint64_t seed, GapReference reference = GapReference::principal_axes);

/// Chronological concatenation of the windows labeled `state`.
ReturnMatrix assemble_state_series(const ReturnMatrix& returns, std::span<const Window> windows,
                                   std::span<const int> labels, int state);

}  // namespace mktcop
