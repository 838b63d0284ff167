#include "hit/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <Eigen/Dense>

#include "hit/simd.hpp"

namespace hit::cluster {

std::string_view linkage_name(Linkage linkage) noexcept {
  switch (linkage) {
    case Linkage::Ward: return "ward";
    case Linkage::Single: return "single";
    case Linkage::Complete: return "complete";
    case Linkage::Average: return "average";
  }
  return "ward";
}

Linkage parse_linkage(std::string_view name) {
  for (auto l : {Linkage::Ward, Linkage::Single, Linkage::Complete, Linkage::Average}) {
    if (linkage_name(l) == name) return l;
  }
  fail(Errc::ConfigError, "unknown linkage '" + std::string(name) + "'");
}

namespace {

void check_finite(const MatrixD& vectors) {
  for (double v : vectors.values()) {
    require(std::isfinite(v), Errc::InvalidArgument, "vectors must be finite");
  }
}

// Lance-Williams update for the distance from cluster k to the union of i and j.
double merged_distance(Linkage linkage, double dki, double dkj, double dij, double ni, double nj,
                       double nk) {
  switch (linkage) {
    case Linkage::Single: return std::min(dki, dkj);
    case Linkage::Complete: return std::max(dki, dkj);
    case Linkage::Average: return (ni * dki + nj * dkj) / (ni + nj);
    case Linkage::Ward: {
      const double t = ni + nj + nk;
      const double sq = ((ni + nk) * dki * dki + (nj + nk) * dkj * dkj - nk * dij * dij) / t;
      return std::sqrt(std::max(0.0, sq));
    }
  }
  return 0.0;
}

}  // namespace

Dendrogram agglomerate(const MatrixD& vectors, Linkage linkage) {
  const std::size_t n = vectors.rows();
  require(n >= 1, Errc::InvalidArgument, "cannot cluster zero vectors");
  check_finite(vectors);
  Dendrogram tree;
  tree.n = n;
  tree.linkage = linkage;
  if (n == 1) return tree;

  const auto& k = simd::active();
  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = std::sqrt(k.l2sq(vectors.row(i).data(), vectors.row(j).data(), vectors.cols()));
      dist[i * n + j] = d;
      dist[j * n + i] = d;
    }
  auto D = [&](std::size_t i, std::size_t j) -> double& { return dist[i * n + j]; };

  std::vector<char> active(n, 1);
  std::vector<double> size(n, 1.0);
  std::vector<std::size_t> nn(n, n);
  std::vector<double> nnd(n, 0.0);
  auto refresh = [&](std::size_t i) {
    nn[i] = n;
    nnd[i] = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i || !active[j]) continue;
      if (D(i, j) < nnd[i]) {
        nnd[i] = D(i, j);
        nn[i] = j;
      }
    }
  };
  for (std::size_t i = 0; i < n; ++i) refresh(i);

  for (std::size_t step = 0; step + 1 < n; ++step) {
    // The first row (ascending) holding the global minimum gives the
    // lexicographically lowest pair, since its own nearest is its lowest partner.
    std::size_t a = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (active[i] && (a == n || nnd[i] < nnd[a])) a = i;
    }
    const std::size_t b = nn[a];
    const std::size_t lo = std::min(a, b);
    const std::size_t hi = std::max(a, b);
    const double h = D(lo, hi);
    for (std::size_t m = 0; m < n; ++m) {
      if (!active[m] || m == lo || m == hi) continue;
      const double d = merged_distance(linkage, D(m, lo), D(m, hi), h, size[lo], size[hi], size[m]);
      D(m, lo) = d;
      D(lo, m) = d;
    }
    active[hi] = 0;
    size[lo] += size[hi];
    tree.merges.push_back({lo, hi, h, static_cast<std::size_t>(size[lo])});

    refresh(lo);
    for (std::size_t m = 0; m < n; ++m) {
      if (!active[m] || m == lo) continue;
      if (nn[m] == lo || nn[m] == hi) {
        refresh(m);
      } else if (D(m, lo) < nnd[m] || (D(m, lo) == nnd[m] && lo < nn[m])) {
        nnd[m] = D(m, lo);
        nn[m] = lo;
      }
    }
  }
  return tree;
}

std::vector<int> cut(const Dendrogram& tree, std::size_t k) {
  require(k >= 1, Errc::InvalidArgument, "k must be >= 1");
  require(k <= tree.n, Errc::KTooLarge,
          "k = " + std::to_string(k) + " exceeds the " + std::to_string(tree.n) + " instances");
  std::vector<std::size_t> parent(tree.n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t s = 0; s < tree.n - k; ++s) {
    const auto& m = tree.merges[s];
    parent[find(m.b)] = find(m.a);
  }
  std::vector<int> label_of_root(tree.n, 0);
  std::vector<int> labels(tree.n);
  int next = 0;
  for (std::size_t i = 0; i < tree.n; ++i) {
    const auto r = find(i);
    if (label_of_root[r] == 0) label_of_root[r] = ++next;
    labels[i] = label_of_root[r];
  }
  return labels;
}

VarianceReport variance_ratio(const MatrixD& vectors, std::span<const int> labels) {
  const std::size_t n = vectors.rows();
  const std::size_t d = vectors.cols();
  require(labels.size() == n, Errc::ShapeMismatch, "one label per vector required");
  require(n >= 1, Errc::InvalidArgument, "no vectors");
  std::map<int, std::size_t> index;
  for (int l : labels) index.emplace(l, 0);
  std::size_t c = 0;
  for (auto& [l, i] : index) i = c++;
  const std::size_t k = index.size();

  std::vector<double> mu(d, 0.0);
  MatrixD means(k, d, 0.0);
  std::vector<double> count(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ci = index[labels[i]];
    count[ci] += 1.0;
    for (std::size_t j = 0; j < d; ++j) {
      means(ci, j) += vectors(i, j);
      mu[j] += vectors(i, j);
    }
  }
  for (auto& v : mu) v /= static_cast<double>(n);
  for (std::size_t ci = 0; ci < k; ++ci)
    for (std::size_t j = 0; j < d; ++j) means(ci, j) /= count[ci];

  VarianceReport r;
  r.k = k;
  for (std::size_t ci = 0; ci < k; ++ci) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += (means(ci, j) - mu[j]) * (means(ci, j) - mu[j]);
    r.between += count[ci] * s;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto ci = index[labels[i]];
    for (std::size_t j = 0; j < d; ++j) {
      const double e = vectors(i, j) - means(ci, j);
      r.within += e * e;
    }
  }
  constexpr double inf = std::numeric_limits<double>::infinity();
  r.degenerate_within = r.within == 0.0;
  r.raw_ratio = r.degenerate_within ? inf : r.between / r.within;
  if (k < 2) {
    r.ch_index = std::numeric_limits<double>::quiet_NaN();
  } else if (r.degenerate_within) {
    r.ch_index = inf;
  } else {
    r.ch_index = (r.between / static_cast<double>(k - 1)) / (r.within / static_cast<double>(n - k));
  }
  return r;
}

MatrixD centroids_of(const MatrixD& vectors, std::span<const int> labels, std::size_t k) {
  require(labels.size() == vectors.rows(), Errc::ShapeMismatch, "one label per vector required");
  MatrixD c(k, vectors.cols(), 0.0);
  std::vector<double> count(k, 0.0);
  for (std::size_t i = 0; i < vectors.rows(); ++i) {
    require(labels[i] >= 1 && static_cast<std::size_t>(labels[i]) <= k, Errc::InvalidArgument,
            "labels must lie in 1..k");
    const auto ci = static_cast<std::size_t>(labels[i] - 1);
    count[ci] += 1.0;
    simd::axpy(1.0, vectors.row(i), c.row(ci));
  }
  for (std::size_t ci = 0; ci < k; ++ci) {
    if (count[ci] == 0.0) continue;
    for (auto& v : c.row(ci)) v /= count[ci];
  }
  return c;
}

ClusterModel hac_fit(const MatrixD& vectors, Linkage linkage, std::size_t k) {
  require(k >= 1, Errc::InvalidArgument, "k must be >= 1");
  require(k <= vectors.rows(), Errc::KTooLarge,
          "k = " + std::to_string(k) + " exceeds the " + std::to_string(vectors.rows()) + " instances");
  ClusterModel m;
  m.tree = agglomerate(vectors, linkage);
  m.k = k;
  m.labels = cut(m.tree, k);
  m.centroids = centroids_of(vectors, m.labels, k);
  m.reports.push_back(variance_ratio(vectors, m.labels));
  return m;
}

Selection select_cluster_count(const Dendrogram& tree, const MatrixD& vectors, std::size_t k_min,
                               std::size_t k_max, SelectionCriterion criterion) {
  require(k_min >= 2 && k_min <= k_max, Errc::InvalidArgument, "invalid k range");
  require(vectors.rows() > k_max, Errc::KTooLarge,
          "need more than " + std::to_string(k_max) + " instances to scan the k range");
  Selection s;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t k = k_min; k <= k_max; ++k) {
    const auto labels = cut(tree, k);
    s.reports.push_back(variance_ratio(vectors, labels));
    const auto& r = s.reports.back();
    const double score = criterion == SelectionCriterion::ChIndex ? r.ch_index : r.raw_ratio;
    if (score > best) {
      best = score;
      s.k = k;
    }
  }
  if (s.k == 0) s.k = k_min;
  return s;
}

Selection select_cluster_count(const MatrixD& vectors, std::size_t k_min, std::size_t k_max,
                               Linkage linkage, SelectionCriterion criterion) {
  return select_cluster_count(agglomerate(vectors, linkage), vectors, k_min, k_max, criterion);
}

CentroidTree centroid_dendrogram(const ClusterModel& model) {
  require(model.centroids.rows() >= 2, Errc::InvalidArgument, "need at least two centroids");
  CentroidTree out;
  out.tree = agglomerate(model.centroids, Linkage::Ward);
  const std::size_t n = out.tree.n;
  // children[node]: leaves are 0..n-1, merge s creates node n + s
  std::vector<std::pair<std::size_t, std::size_t>> children;
  std::vector<std::size_t> node_of(n);
  std::iota(node_of.begin(), node_of.end(), std::size_t{0});
  for (const auto& m : out.tree.merges) {
    children.emplace_back(node_of[m.a], node_of[m.b]);
    node_of[m.a] = n + children.size() - 1;
  }
  std::vector<std::size_t> stack{node_of[0]};
  while (!stack.empty()) {
    const auto node = stack.back();
    stack.pop_back();
    if (node < n) {
      out.leaf_order.push_back(static_cast<int>(node) + 1);
      continue;
    }
    const auto [l, r] = children[node - n];
    stack.push_back(r);
    stack.push_back(l);
  }
  return out;
}

int knn_classify(const MatrixD& train, std::span<const int> labels, std::span<const double> query,
                 std::size_t k) {
  require(train.rows() > 0, Errc::EmptyTrainingSet, "kNN training set is empty");
  require(labels.size() == train.rows(), Errc::ShapeMismatch, "one label per training vector");
  require(query.size() == train.cols(), Errc::DimMismatch, "query dimension mismatch");
  require(k >= 1, Errc::InvalidArgument, "k must be >= 1");
  std::vector<std::pair<double, std::size_t>> d(train.rows());
  for (std::size_t i = 0; i < train.rows(); ++i) d[i] = {simd::l2sq(train.row(i), query), i};
  const std::size_t kk = std::min(k, d.size());
  std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(kk), d.end());
  std::map<int, std::size_t> votes;
  for (std::size_t i = 0; i < kk; ++i) ++votes[labels[d[i].second]];
  std::size_t top = 0;
  for (const auto& [l, v] : votes) top = std::max(top, v);
  std::size_t winners = 0;
  int winner = 0;
  for (const auto& [l, v] : votes) {
    if (v == top) {
      ++winners;
      winner = l;
    }
  }
  return winners == 1 ? winner : labels[d[0].second];
}

MatrixD project_2d(const MatrixD& vectors) {
  const std::size_t n = vectors.rows();
  const std::size_t d = vectors.cols();
  require(n >= 2, Errc::InvalidArgument, "projection needs at least two vectors");
  check_finite(vectors);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = vectors(i, j);
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  require(eig.info() == Eigen::Success, Errc::NumericFailure, "eigendecomposition failed");
  MatrixD out(n, 2, 0.0);
  const auto dims = static_cast<Eigen::Index>(d);
  for (Eigen::Index axis = 0; axis < std::min<Eigen::Index>(2, dims); ++axis) {
    // eigenvalues ascend
    const Eigen::VectorXd coord = x * eig.eigenvectors().col(dims - 1 - axis);
    Eigen::Index arg = 0;
    for (Eigen::Index i = 1; i < coord.size(); ++i) {
      if (std::abs(coord(i)) > std::abs(coord(arg))) arg = i;
    }
    const double sign = coord(arg) < 0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < n; ++i) out(i, static_cast<std::size_t>(axis)) = sign * coord(static_cast<Eigen::Index>(i));
  }
  return out;
}

Agreement annotation_agreement(std::span<const int> labels, const std::vector<std::string>& regions) {
  require(labels.size() == regions.size(), Errc::ShapeMismatch, "one region tag per instance required");
  Agreement a;
  a.clusters.assign(labels.begin(), labels.end());
  std::sort(a.clusters.begin(), a.clusters.end());
  a.clusters.erase(std::unique(a.clusters.begin(), a.clusters.end()), a.clusters.end());
  a.regions = regions;
  std::sort(a.regions.begin(), a.regions.end());
  a.regions.erase(std::unique(a.regions.begin(), a.regions.end()), a.regions.end());
  a.counts = Matrix<std::size_t>(a.clusters.size(), a.regions.size(), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto r = static_cast<std::size_t>(
        std::lower_bound(a.clusters.begin(), a.clusters.end(), labels[i]) - a.clusters.begin());
    const auto c = static_cast<std::size_t>(
        std::lower_bound(a.regions.begin(), a.regions.end(), regions[i]) - a.regions.begin());
    ++a.counts(r, c);
  }
  a.proportions = MatrixD(a.clusters.size(), a.regions.size(), 0.0);
  for (std::size_t r = 0; r < a.clusters.size(); ++r) {
    std::size_t total = 0, best = 0;
    for (std::size_t c = 0; c < a.regions.size(); ++c) {
      total += a.counts(r, c);
      if (a.counts(r, c) > a.counts(r, best)) best = c;
    }
    for (std::size_t c = 0; c < a.regions.size(); ++c) {
      a.proportions(r, c) = total ? static_cast<double>(a.counts(r, c)) / static_cast<double>(total) : 0.0;
    }
    a.majority.push_back(a.regions.empty() ? std::string{} : a.regions[best]);
  }
  return a;
}

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  require(a.size() == b.size(), Errc::ShapeMismatch, "labelings differ in length");
  const double n = static_cast<double>(a.size());
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> ra, rb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1.0;
    ra[a[i]] += 1.0;
    rb[b[i]] += 1.0;
  }
  auto c2 = [](double x) { return x * (x - 1.0) / 2.0; };
  double sum_joint = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& [k, v] : joint) sum_joint += c2(v);
  for (const auto& [k, v] : ra) sum_a += c2(v);
  for (const auto& [k, v] : rb) sum_b += c2(v);
  const double total = c2(n);
  if (total == 0.0) return 1.0;
  const double expected = sum_a * sum_b / total;
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;
  return (sum_joint - expected) / (max_index - expected);
}

nlohmann::json dendrogram_json(const Dendrogram& tree) {
  nlohmann::json merges = nlohmann::json::array();
  for (const auto& m : tree.merges) {
    merges.push_back({{"a", m.a}, {"b", m.b}, {"height", m.height}, {"size", m.size}});
  }
  return {{"n", tree.n}, {"linkage", linkage_name(tree.linkage)}, {"merges", merges}};
}

std::string assignments_csv(const std::vector<Assignment>& rows) {
  std::ostringstream os;
  os << "slide_id,gland_id,cluster\n";
  for (const auto& r : rows) os << r.slide_id << ',' << r.gland_id << ',' << r.cluster << '\n';
  return os.str();
}

}  // namespace hit::cluster
