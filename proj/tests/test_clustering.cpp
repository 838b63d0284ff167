#include <cmath>
#include <limits>

#include "doctest.h"
#include "hit/clustering.hpp"
#include "hit/rng.hpp"
#include "oracles.hpp"

using namespace hit;
using namespace hit::cluster;

namespace {

MatrixD random_points(Rng& rng, std::size_t n, std::size_t d) {
  MatrixD m(n, d);
  for (auto& v : m.values()) v = rng.normal();
  return m;
}

MatrixD line_points(std::initializer_list<double> xs) {
  MatrixD m(xs.size(), 1);
  std::size_t i = 0;
  for (double x : xs) m(i++, 0) = x;
  return m;
}

oracle::Link to_oracle(Linkage l) {
  switch (l) {
    case Linkage::Ward: return oracle::Link::Ward;
    case Linkage::Single: return oracle::Link::Single;
    case Linkage::Complete: return oracle::Link::Complete;
    case Linkage::Average: return oracle::Link::Average;
  }
  return oracle::Link::Ward;
}

}  // namespace

TEST_CASE("agglomeration matches the brute-force definition") {
  Rng rng(17);
  for (auto linkage : {Linkage::Ward, Linkage::Single, Linkage::Complete, Linkage::Average}) {
    CAPTURE(linkage_name(linkage));
    for (int trial = 0; trial < 30; ++trial) {
      const std::size_t n = 2 + rng.below(11);
      const auto x = random_points(rng, n, 1 + rng.below(4));
      const auto tree = agglomerate(x, linkage);
      const auto want = oracle::brute_force_hac(x, to_oracle(linkage));
      REQUIRE(tree.merges.size() == want.size());
      for (std::size_t s = 0; s < want.size(); ++s) {
        CHECK(tree.merges[s].a == want[s].a);
        CHECK(tree.merges[s].b == want[s].b);
        CHECK(tree.merges[s].size == want[s].size);
        CHECK(tree.merges[s].height == doctest::Approx(want[s].height).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("equal distances merge the lowest pair first") {
  const auto x = line_points({0.0, 1.0, 2.0, 3.0});
  const auto tree = agglomerate(x, Linkage::Single);
  CHECK(tree.merges[0] == Merge{0, 1, 1.0, 2});
  CHECK(tree.merges[1] == Merge{0, 2, 1.0, 3});
  CHECK(tree.merges[2] == Merge{0, 3, 1.0, 4});
}

TEST_CASE("cut numbers clusters by smallest member") {
  const auto x = line_points({10.0, 0.0, 10.5, 0.2, 20.0});
  const auto tree = agglomerate(x, Linkage::Ward);
  CHECK(cut(tree, 1) == std::vector<int>{1, 1, 1, 1, 1});
  CHECK(cut(tree, 3) == std::vector<int>{1, 2, 1, 2, 3});
  CHECK(cut(tree, 5) == std::vector<int>{1, 2, 3, 4, 5});
  CHECK_THROWS_AS(cut(tree, 6), Error);
}

TEST_CASE("variance ratio by hand") {
  const auto x = line_points({0.0, 2.0, 10.0, 12.0});
  const std::vector<int> labels{7, 7, 3, 3};
  const auto r = variance_ratio(x, labels);
  // grand mean 6; cluster means 1 and 11
  CHECK(r.k == 2);
  CHECK(r.between == doctest::Approx(2 * 25.0 + 2 * 25.0));
  CHECK(r.within == doctest::Approx(4.0));
  CHECK(r.raw_ratio == doctest::Approx(25.0));
  CHECK(r.ch_index == doctest::Approx(25.0 * (4 - 2) / (2 - 1)));
  CHECK_FALSE(r.degenerate_within);

  const std::vector<int> one{1, 1, 1, 1};
  CHECK(std::isnan(variance_ratio(x, one).ch_index));

  const auto dup = line_points({1.0, 1.0, 5.0, 5.0});
  const auto d = variance_ratio(dup, std::vector<int>{1, 1, 2, 2});
  CHECK(d.degenerate_within);
  CHECK(d.ch_index == std::numeric_limits<double>::infinity());
}

TEST_CASE("cluster count selection finds planted groups") {
  Rng rng(2);
  MatrixD x(60, 2);
  for (std::size_t i = 0; i < 60; ++i) {
    const double cx = 20.0 * static_cast<double>(i % 3);
    x(i, 0) = cx + rng.normal();
    x(i, 1) = rng.normal();
  }
  const auto s = select_cluster_count(x, 2, 10);
  CHECK(s.k == 3);
  CHECK(s.reports.size() == 9);
  CHECK(s.reports.front().k == 2);
  CHECK(select_cluster_count(x, 2, 10, Linkage::Ward, SelectionCriterion::RawRatio).k >= 3);
  CHECK_THROWS_AS(select_cluster_count(x, 2, 60), Error);

  const auto model = hac_fit(x, Linkage::Ward, 3);
  CHECK(model.labels.size() == 60);
  CHECK(model.centroids.rows() == 3);
  for (std::size_t c = 0; c < 3; ++c) {
    const double cx = model.centroids(c, 0);
    CHECK(std::abs(cx - 20.0 * std::round(cx / 20.0)) < 1.0);
  }
  try {
    hac_fit(x, Linkage::Ward, 61);
    FAIL("expected KTooLarge");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::KTooLarge);
  }
}

TEST_CASE("centroid dendrogram orders leaves left to right") {
  ClusterModel m;
  m.k = 3;
  m.centroids = line_points({0.0, 10.0, 1.0});
  const auto t = centroid_dendrogram(m);
  CHECK(t.tree.merges.size() == 2);
  CHECK(t.tree.merges[0].a == 0);
  CHECK(t.tree.merges[0].b == 2);
  CHECK(t.leaf_order == std::vector<int>{1, 3, 2});
}

TEST_CASE("kNN majority vote with nearest-neighbour tie break") {
  const auto train = line_points({0.0, 1.0, 2.0, 10.0, 11.0});
  const std::vector<int> labels{1, 1, 2, 3, 3};
  const double q1[] = {0.4};
  CHECK(knn_classify(train, labels, q1, 3) == 1);
  const double q2[] = {10.2};
  CHECK(knn_classify(train, labels, q2, 3) == 3);
  // neighbours of 1.9 are 2 (label 2), 1 (label 1), 0 (label 1): majority 1
  const double q3[] = {1.9};
  CHECK(knn_classify(train, labels, q3, 3) == 1);
  // k = 2: one vote each, nearest wins
  CHECK(knn_classify(train, labels, q3, 2) == 2);
  CHECK_THROWS_AS(knn_classify(MatrixD(0, 1), {}, q1, 3), Error);
}

TEST_CASE("PCA projection recovers the dominant axis with a fixed sign") {
  MatrixD x(5, 3, 0.0);
  const double t[] = {-2.0, -1.0, 0.0, 1.0, 2.5};
  for (std::size_t i = 0; i < 5; ++i) {
    x(i, 0) = t[i];
    x(i, 1) = -t[i];
    x(i, 2) = 0.01 * static_cast<double>(i % 2);
  }
  const auto p = project_2d(x);
  CHECK(p.rows() == 5);
  CHECK(p.cols() == 2);
  const double mean_t = 0.1;
  for (std::size_t i = 0; i < 5; ++i) CHECK(p(i, 0) == doctest::Approx((t[i] - mean_t) * std::sqrt(2.0)));
  CHECK(p(4, 0) > 0);
}

TEST_CASE("annotation agreement table") {
  const std::vector<int> labels{2, 1, 1, 2, 2};
  const std::vector<std::string> regions{"tumour", "benign", "tumour", "tumour", "benign"};
  const auto a = annotation_agreement(labels, regions);
  CHECK(a.clusters == std::vector<int>{1, 2});
  CHECK(a.regions == std::vector<std::string>{"benign", "tumour"});
  CHECK(a.counts(1, 1) == 2);
  CHECK(a.proportions(1, 1) == doctest::Approx(2.0 / 3.0));
  CHECK(a.majority == std::vector<std::string>{"benign", "tumour"});
}

TEST_CASE("adjusted Rand index agrees with the contingency formula") {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> a(30), b(30);
    for (auto& v : a) v = static_cast<int>(rng.below(4));
    for (auto& v : b) v = static_cast<int>(rng.below(3));
    CHECK(adjusted_rand_index(a, b) == doctest::Approx(oracle::adjusted_rand(a, b)).epsilon(1e-12));
  }
  const std::vector<int> x{1, 1, 2, 2}, y{5, 5, 9, 9};
  CHECK(adjusted_rand_index(x, y) == doctest::Approx(1.0));
}

TEST_CASE("serialisation") {
  const auto tree = agglomerate(line_points({0.0, 1.0, 5.0}), Linkage::Average);
  const auto j = dendrogram_json(tree);
  CHECK(j["n"] == 3);
  CHECK(j["linkage"] == "average");
  CHECK(j["merges"].size() == 2);
  CHECK(j["merges"][1]["height"].get<double>() == doctest::Approx(4.5));
  CHECK(assignments_csv({{"s", "3", 2}}) == "slide_id,gland_id,cluster\ns,3,2\n");
  CHECK(parse_linkage("complete") == Linkage::Complete);
  CHECK_THROWS_AS(parse_linkage("median"), Error);
}
