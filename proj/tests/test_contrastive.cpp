#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "hit/contrastive.hpp"
#include "oracles.hpp"

using namespace hit;
using namespace hit::cl;

namespace {

MatrixD random_matrix(Rng& rng, std::size_t r, std::size_t c, double sd = 1.0) {
  MatrixD m(r, c);
  for (auto& v : m.values()) v = sd * rng.normal();
  return m;
}

// Gland views: a per-group centre plus per-view noise.
ViewSet toy_views(std::uint64_t seed, std::size_t groups, std::size_t views, std::size_t dim) {
  Rng rng(seed);
  ViewSet v;
  v.vectors = MatrixF(groups * views, dim);
  for (std::size_t g = 0; g < groups; ++g) {
    std::vector<double> centre(dim);
    for (auto& c : centre) c = rng.normal();
    for (std::size_t k = 0; k < views; ++k) {
      const std::size_t r = g * views + k;
      for (std::size_t j = 0; j < dim; ++j) v.vectors(r, j) = static_cast<float>(centre[j] + 0.3 * rng.normal());
      v.groups.push_back(static_cast<std::int64_t>(g));
    }
  }
  return v;
}

}  // namespace

TEST_CASE("triplet hinge") {
  CHECK(triplet_loss(1.0, 2.0) == 0.0);
  CHECK(triplet_loss(1.0, 1.5) == doctest::Approx(0.25));
  CHECK(triplet_loss(0.5, 0.5, 0.1) == doctest::Approx(0.1));
  CHECK_THROWS_AS(triplet_loss(-1.0, 0.0), Error);
}

TEST_CASE("batch-hard mining picks farthest positive and nearest negative") {
  // points on a line: group 0 at 0 and 3, group 1 at 1 and 5, group 2 alone at 10
  MatrixD p(5, 1);
  p(0, 0) = 0;
  p(1, 0) = 3;
  p(2, 0) = 1;
  p(3, 0) = 5;
  p(4, 0) = 10;
  const std::vector<std::int64_t> g{0, 0, 1, 1, 2};
  const auto t = mine_batch_hard(p, g);
  REQUIRE(t.size() == 4);  // the singleton group has no positive
  CHECK(t[0].anchor == 0);
  CHECK(t[0].positive == 1);
  CHECK(t[0].negative == 2);
  CHECK(t[0].d_ap == 3.0);
  CHECK(t[0].d_an == 1.0);
  CHECK(t[1].negative == 2);  // from 3: 1 is at distance 2, 5 at 2, lowest index wins
  CHECK(t[3].anchor == 3);
  CHECK(t[3].negative == 1);
  CHECK(t[3].d_an == 2.0);

  const std::vector<std::int64_t> same{4, 4, 4, 4, 4};
  try {
    mine_batch_hard(p, same);
    FAIL("expected DegenerateBatch");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::DegenerateBatch);
  }
}

TEST_CASE("projection head output matches hand computation and is unit norm") {
  ProjectionHead head(2, 2, 2, 1);
  auto p = head.params();
  // W1 = I, b1 = 0, W2 = [[1, 1], [0, 2]], b2 = [0, 0.5]
  const double values[] = {1, 0, 0, 1, 0, 0, 1, 1, 0, 2, 0, 0.5};
  std::copy(std::begin(values), std::end(values), p.begin());
  const double x[] = {0.3, -0.2};
  double y[2];
  head.project(x, y);
  const double h0 = std::tanh(0.3), h1 = std::tanh(-0.2);
  const double z0 = h0 + h1, z1 = 2 * h1 + 0.5;
  const double n = std::hypot(z0, z1);
  CHECK(y[0] == doctest::Approx(z0 / n));
  CHECK(y[1] == doctest::Approx(z1 / n));

  Rng rng(3);
  const ProjectionHead big(16, 32, 8, 5);
  const auto out = big.project(random_matrix(rng, 10, 16));
  for (std::size_t r = 0; r < 10; ++r) {
    double s = 0.0;
    for (double v : out.row(r)) s += v * v;
    CHECK(s == doctest::Approx(1.0));
  }
}

TEST_CASE("triplet gradient matches central differences") {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    ProjectionHead head(5, 4, 3, 100 + trial);
    const auto x = random_matrix(rng, 8, 5);
    const std::vector<std::int64_t> g{0, 0, 1, 1, 2, 2, 3, 3};
    const auto lg = batch_loss_and_gradient(head, x, g);
    CHECK(lg.loss == doctest::Approx(batch_loss(head, x, g)));
    const double err = oracle::worst_gradient_error(head.params(), lg.gradient,
                                                    [&] { return batch_loss(head, x, g); });
    CHECK(err <= 1e-4);
  }
}

TEST_CASE("standardizer") {
  MatrixD rows(3, 2);
  rows(0, 0) = 1;
  rows(1, 0) = 2;
  rows(2, 0) = 3;
  rows(0, 1) = rows(1, 1) = rows(2, 1) = 7;
  const auto s = Standardizer::fit(rows);
  CHECK(s.mean[0] == 2.0);
  CHECK(s.scale[1] == 1.0);
  const auto z = s.apply(rows);
  CHECK(z(0, 0) + z(2, 0) == doctest::Approx(0.0));
  CHECK(z(1, 1) == 0.0);
  double var = 0.0;
  for (std::size_t r = 0; r < 3; ++r) var += z(r, 0) * z(r, 0);
  CHECK(var / 3.0 == doctest::Approx(1.0));
  CHECK(Standardizer::identity(2).apply(rows) == rows);
}

TEST_CASE("group split is disjoint, complete and sized 70-20-10") {
  std::vector<std::int64_t> g;
  for (int i = 0; i < 10; ++i) g.insert(g.end(), {i, i});
  const auto s = split_groups(g, 0.7, 0.2, 4);
  CHECK(s.train.size() == 7);
  CHECK(s.val.size() == 2);
  CHECK(s.test.size() == 1);
  std::set<std::int64_t> all(s.train.begin(), s.train.end());
  all.insert(s.val.begin(), s.val.end());
  all.insert(s.test.begin(), s.test.end());
  CHECK(all.size() == 10);
  CHECK(split_groups(g, 0.7, 0.2, 4).train == s.train);
  CHECK_THROWS_AS(split_groups(g, 0.9, 0.2, 1), Error);
}

TEST_CASE("augmentation without jitter is a flip of the input") {
  RgbImage img(3, 2);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 3; ++x) img.set(x, y, static_cast<std::uint8_t>(x), static_cast<std::uint8_t>(y), 50);
  Rng rng(8);
  for (int i = 0; i < 8; ++i) {
    const auto out = augment_crop(img, rng, {0.0, 0.0, 0.0});
    REQUIRE(out.width() == 3);
    const auto* p = out.pixel(0, 0);
    const bool hflip = p[0] == 2;
    const bool vflip = p[1] == 1;
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 3; ++x) {
        const auto* q = out.pixel(x, y);
        CHECK(q[0] == (hflip ? 2 - x : x));
        CHECK(q[1] == (vflip ? 1 - y : y));
      }
  }
  Rng a(1), b(1);
  CHECK(augment_crop(img, a) == augment_crop(img, b));
}

TEST_CASE("view sets are seeded per row and thread-count independent") {
  std::vector<EncoderInput> inputs;
  for (int i = 0; i < 3; ++i) inputs.push_back({RgbImage(12, 12, static_cast<std::uint8_t>(60 + 40 * i)), std::nullopt});
  const auto a = build_view_set(inputs, "hit-baseline-v1", 2, 5, 1);
  const auto b = build_view_set(inputs, "hit-baseline-v1", 2, 5, 3);
  CHECK(a.vectors == b.vectors);
  CHECK(a.groups == std::vector<std::int64_t>{0, 0, 1, 1, 2, 2});
}

TEST_CASE("training lowers validation loss and records checkpoints") {
  const auto views = toy_views(2, 60, 2, 12);
  TrainConfig cfg;
  cfg.epochs = 6;
  cfg.batch_size = 16;
  cfg.hidden_dim = 16;
  cfg.out_dim = 4;
  cfg.learning_rate = 1e-2;
  cfg.checkpoint_epochs = {1, 3, 40};
  cfg.seed = 3;
  const auto r = train_projection_head(views, cfg);
  REQUIRE(r.val_loss.size() == 7);
  CHECK(r.val_loss.back() < r.val_loss.front());
  REQUIRE(r.checkpoints.size() == 3);
  CHECK(r.checkpoints[0].epoch == 1);
  CHECK(r.checkpoints[2].epoch == 6);  // clamped to the last epoch
  CHECK(r.checkpoints[2].head == r.final_head);
  CHECK(r.checkpoints[1].val_loss == r.val_loss[3]);
  CHECK_FALSE(r.initial == r.final_head);

  const auto again = train_projection_head(views, cfg);
  CHECK(again.final_head == r.final_head);

  const auto path = std::filesystem::temp_directory_path() / "hit_test_ckpt.hitparam";
  save_checkpoint(path, r.checkpoints[1], r.standardizer, cfg.margin, cfg.seed);
  const auto loaded = load_checkpoint(path);
  CHECK(loaded.checkpoint.head == r.checkpoints[1].head);
  CHECK(loaded.checkpoint.epoch == 3);
  CHECK(loaded.standardizer.mean == r.standardizer.mean);
  CHECK(loaded.margin == cfg.margin);
  std::filesystem::remove(path);

  EmbeddingStore store;
  store.slide_id = "s";
  store.encoder_tag = "toy";
  store.vectors = MatrixF(2, 12, 0.5f);
  store.gland_ids = {1, 2};
  store.bboxes = {{}, {}};
  const auto projected = project_embeddings(r.final_head, r.standardizer, store);
  CHECK(projected.dim() == 4);
  CHECK(projected.encoder_tag == "toy+cl");
  CHECK(projected.gland_ids == store.gland_ids);
}

TEST_CASE("too few glands for a three-way split") {
  const auto views = toy_views(1, 2, 2, 4);
  TrainConfig cfg;
  cfg.epochs = 1;
  try {
    train_projection_head(views, cfg);
    FAIL("expected EmptySplit");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::EmptySplit);
  }
}
