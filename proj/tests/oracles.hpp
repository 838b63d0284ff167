#pragma once

// Slow, obviously-correct reference implementations that the tests compare
// the library against. None of them share code with src/.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "hit/matrix.hpp"
#include "hit/raster.hpp"

namespace oracle {

/// Labels by breadth-first flood fill, numbering components in raster order
/// of their first pixel.
inline hit::Plane<std::int32_t> flood_fill_labels(const hit::BinaryPlane& mask, int connectivity,
                                                  int* count = nullptr) {
  const int w = mask.width();
  const int h = mask.height();
  hit::Plane<std::int32_t> labels(w, h, 0);
  std::vector<std::pair<int, int>> offsets{{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
  if (connectivity == 8) {
    offsets.insert(offsets.end(), {{1, 1}, {1, -1}, {-1, 1}, {-1, -1}});
  }
  int next = 0;
  std::vector<std::pair<int, int>> queue;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!mask.at(x, y) || labels.at(x, y)) continue;
      ++next;
      labels.at(x, y) = next;
      queue.assign(1, {x, y});
      for (std::size_t q = 0; q < queue.size(); ++q) {
        const auto [cx, cy] = queue[q];
        for (const auto& [dx, dy] : offsets) {
          const int nx = cx + dx;
          const int ny = cy + dy;
          if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
          if (!mask.at(nx, ny) || labels.at(nx, ny)) continue;
          labels.at(nx, ny) = next;
          queue.push_back({nx, ny});
        }
      }
    }
  }
  if (count) *count = next;
  return labels;
}

/// Mann-Whitney AUC by enumerating every positive/negative pair.
inline double pairwise_auc(std::span<const double> scores, std::span<const int> labels) {
  double credit = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) credit += 1.0;
      else if (scores[i] == scores[j]) credit += 0.5;
    }
  }
  return credit / pairs;
}

enum class Link { Ward, Single, Complete, Average };

struct OracleMerge {
  std::size_t a = 0;
  std::size_t b = 0;
  double height = 0.0;
  std::size_t size = 0;
};

/// Agglomeration that recomputes every cluster distance from its definition
/// at every step. Clusters are identified by their smallest member.
inline std::vector<OracleMerge> brute_force_hac(const hit::MatrixD& x, Link link) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  std::vector<std::vector<std::size_t>> clusters(n);
  for (std::size_t i = 0; i < n; ++i) clusters[i] = {i};

  auto euclid = [&](std::size_t i, std::size_t j) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) s += (x(i, k) - x(j, k)) * (x(i, k) - x(j, k));
    return std::sqrt(s);
  };
  auto distance = [&](const std::vector<std::size_t>& A, const std::vector<std::size_t>& B) {
    if (link == Link::Ward) {
      std::vector<double> ca(d, 0.0), cb(d, 0.0);
      for (auto i : A) for (std::size_t k = 0; k < d; ++k) ca[k] += x(i, k) / static_cast<double>(A.size());
      for (auto i : B) for (std::size_t k = 0; k < d; ++k) cb[k] += x(i, k) / static_cast<double>(B.size());
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += (ca[k] - cb[k]) * (ca[k] - cb[k]);
      const double na = static_cast<double>(A.size());
      const double nb = static_cast<double>(B.size());
      return std::sqrt(2.0 * na * nb / (na + nb) * s);
    }
    double best = link == Link::Single ? std::numeric_limits<double>::infinity() : 0.0;
    double sum = 0.0;
    for (auto i : A) {
      for (auto j : B) {
        const double e = euclid(i, j);
        if (link == Link::Single) best = std::min(best, e);
        if (link == Link::Complete) best = std::max(best, e);
        sum += e;
      }
    }
    if (link == Link::Average) return sum / static_cast<double>(A.size() * B.size());
    return best;
  };

  std::vector<OracleMerge> merges;
  std::vector<bool> alive(n, true);
  for (std::size_t step = 0; step + 1 < n; ++step) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t ba = 0, bb = 0;
    for (std::size_t a = 0; a < n; ++a) {
      if (!alive[a]) continue;
      for (std::size_t b = a + 1; b < n; ++b) {
        if (!alive[b]) continue;
        const double dist = distance(clusters[a], clusters[b]);
        if (dist < best) {
          best = dist;
          ba = a;
          bb = b;
        }
      }
    }
    clusters[ba].insert(clusters[ba].end(), clusters[bb].begin(), clusters[bb].end());
    clusters[bb].clear();
    alive[bb] = false;
    merges.push_back({ba, bb, best, clusters[ba].size()});
  }
  return merges;
}

/// Rand index corrected for chance, from the contingency table.
inline double adjusted_rand(std::span<const int> a, std::span<const int> b) {
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> ra, rb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1.0;
    ra[a[i]] += 1.0;
    rb[b[i]] += 1.0;
  }
  auto c2 = [](double v) { return v * (v - 1.0) / 2.0; };
  double sum_joint = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& [k, v] : joint) sum_joint += c2(v);
  for (const auto& [k, v] : ra) sum_a += c2(v);
  for (const auto& [k, v] : rb) sum_b += c2(v);
  const double expected = sum_a * sum_b / c2(static_cast<double>(a.size()));
  const double max_index = 0.5 * (sum_a + sum_b);
  return (sum_joint - expected) / (max_index - expected);
}

/// Worst relative error between an analytic gradient and central differences
/// of `loss` around `params`. Components whose magnitudes are both below
/// `floor` are compared on the absolute scale of `floor`.
inline double worst_gradient_error(std::span<double> params, std::span<const double> analytic,
                                   const std::function<double()>& loss, double step = 1e-5,
                                   double floor = 1e-7) {
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double saved = params[k];
    params[k] = saved + step;
    const double up = loss();
    params[k] = saved - step;
    const double down = loss();
    params[k] = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double scale = std::max({std::abs(numeric), std::abs(analytic[k]), floor});
    worst = std::max(worst, std::abs(numeric - analytic[k]) / scale);
  }
  return worst;
}

/// Pixel-centre rasterisation of a rotated ellipse.
inline bool inside_ellipse(double px, double py, double cx, double cy, double angle, double a, double b) {
  const double dx = px - cx;
  const double dy = py - cy;
  const double u = dx * std::cos(angle) + dy * std::sin(angle);
  const double v = -dx * std::sin(angle) + dy * std::cos(angle);
  return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
}

}  // namespace oracle
