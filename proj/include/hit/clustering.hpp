#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "hit/matrix.hpp"

namespace hit::cluster {

enum class Linkage { Ward, Single, Complete, Average };

std::string_view linkage_name(Linkage linkage) noexcept;
Linkage parse_linkage(std::string_view name);

/// One agglomeration step. `a` and `b` are the smallest member indices of the
/// two merged clusters (a < b); the merged cluster is identified by `a`.
struct Merge {
  std::size_t a = 0;
  std::size_t b = 0;
  double height = 0.0;
  std::size_t size = 0;  // members after the merge

  friend bool operator==(const Merge&, const Merge&) = default;
};

/// Full agglomeration history, n - 1 merges in order.
struct Dendrogram {
  std::size_t n = 0;
  Linkage linkage = Linkage::Ward;
  std::vector<Merge> merges;
};

/// Builds the whole tree. Pairs at equal distance are merged lowest
/// (a, b) first.
Dendrogram agglomerate(const MatrixD& vectors, Linkage linkage = Linkage::Ward);

/// Labels 1..k after undoing the last k - 1 merges. Clusters are numbered
/// in order of their smallest member index.
std::vector<int> cut(const Dendrogram& tree, std::size_t k);

struct VarianceReport {
  std::size_t k = 0;
  double between = 0.0;
  double within = 0.0;
  /// Calinski-Harabasz index. NaN for k = 1; +inf when within = 0.
  double ch_index = 0.0;
  /// between / within, the unnormalised ratio. +inf when within = 0.
  double raw_ratio = 0.0;
  bool degenerate_within = false;
};

/// Labels may be any integers; k is the number of distinct values.
VarianceReport variance_ratio(const MatrixD& vectors, std::span<const int> labels);

enum class SelectionCriterion { ChIndex, RawRatio };

struct ClusterModel {
  Dendrogram tree;
  std::size_t k = 0;
  std::vector<int> labels;  // 1..k
  MatrixD centroids;        // k x dim, row c-1 for label c
  std::vector<VarianceReport> reports;  // one per evaluated k
};

MatrixD centroids_of(const MatrixD& vectors, std::span<const int> labels, std::size_t k);

ClusterModel hac_fit(const MatrixD& vectors, Linkage linkage, std::size_t k);

struct Selection {
  std::size_t k = 0;
  std::vector<VarianceReport> reports;
};

/// argmax of the criterion over k in [k_min, k_max]; ties go to the smaller k.
Selection select_cluster_count(const MatrixD& vectors, std::size_t k_min = 2, std::size_t k_max = 20,
                               Linkage linkage = Linkage::Ward,
                               SelectionCriterion criterion = SelectionCriterion::ChIndex);
Selection select_cluster_count(const Dendrogram& tree, const MatrixD& vectors, std::size_t k_min,
                               std::size_t k_max,
                               SelectionCriterion criterion = SelectionCriterion::ChIndex);

/// Ward tree over the model centroids plus a left-to-right leaf order.
/// Labels in `leaf_order` are 1-based cluster labels.
struct CentroidTree {
  Dendrogram tree;
  std::vector<int> leaf_order;
};
CentroidTree centroid_dendrogram(const ClusterModel& model);

/// Majority vote among the k nearest training vectors; a tied vote goes to
/// the nearest neighbour's label.
int knn_classify(const MatrixD& train, std::span<const int> labels, std::span<const double> query,
                 std::size_t k = 3);

/// Coordinates on the top two principal axes (n x 2). Each axis is signed so
/// its largest-magnitude coordinate is positive.
MatrixD project_2d(const MatrixD& vectors);

struct Agreement {
  std::vector<int> clusters;         // sorted distinct labels
  std::vector<std::string> regions;  // sorted distinct tags
  Matrix<std::size_t> counts;        // clusters x regions
  MatrixD proportions;               // row-normalised counts
  std::vector<std::string> majority; // per cluster; ties go to the first tag
};
Agreement annotation_agreement(std::span<const int> labels, const std::vector<std::string>& regions);

/// Chance-corrected pair-counting agreement between two labelings.
double adjusted_rand_index(std::span<const int> a, std::span<const int> b);

nlohmann::json dendrogram_json(const Dendrogram& tree);

struct Assignment {
  std::string slide_id;
  std::string gland_id;
  int cluster = 0;
};
std::string assignments_csv(const std::vector<Assignment>& rows);

}  // namespace hit::cluster
