#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "doctest.h"
#include "hit/mil.hpp"
#include "hit/rng.hpp"
#include "hit/synth.hpp"
#include "oracles.hpp"

using namespace hit;
using namespace hit::mil;

namespace {

MatrixD random_bag(Rng& rng, std::size_t n, std::size_t d) {
  MatrixD x(n, d);
  for (auto& v : x.values()) v = rng.normal();
  return x;
}

void randomise(MilHead& head, Rng& rng, double sd = 0.5) {
  for (auto& p : head.params()) p = sd * rng.normal();
}

EmbeddingBag padded(const MatrixD& x, std::size_t capacity, const std::vector<std::size_t>& slots) {
  EmbeddingBag b;
  b.case_id = b.slide_id = "c";
  b.instances = MatrixF(capacity, x.cols(), 0.0f);
  b.valid.assign(capacity, 0);
  b.gland_ids.assign(capacity, -1);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t j = 0; j < x.cols(); ++j) b.instances(slots[r], j) = static_cast<float>(x(r, j));
    b.valid[slots[r]] = 1;
    b.gland_ids[slots[r]] = static_cast<int>(r) + 1;
  }
  b.n_valid = x.rows();
  return b;
}

MatrixD float_exact(Rng& rng, std::size_t n, std::size_t d) {
  MatrixD x(n, d);
  for (auto& v : x.values()) v = static_cast<float>(rng.normal());
  return x;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

TEST_CASE("gated head forward matches hand algebra on a 2-instance toy") {
  GatedAttentionHead head(2, 2, 0);
  // V = I, bV = 0, U = 0, bU = 0 (gate 0.5), w = (1, -1), c = (2, 0), c0 = -1
  const double p[] = {1, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 1, -1, 2, 0, -1};
  std::copy(std::begin(p), std::end(p), head.params().begin());
  MatrixD x(2, 2);
  x(0, 0) = 1.0;
  x(0, 1) = 0.0;
  x(1, 0) = 0.0;
  x(1, 1) = 2.0;
  const double e0 = 0.5 * std::tanh(1.0);
  const double e1 = -0.5 * std::tanh(2.0);
  const double a0 = std::exp(e0) / (std::exp(e0) + std::exp(e1));
  const double z0 = a0 * 1.0;
  const double logit = 2.0 * z0 - 1.0;
  const auto out = head.forward(x);
  CHECK(out.attention[0] == doctest::Approx(a0).epsilon(1e-12));
  CHECK(out.logit == doctest::Approx(logit).epsilon(1e-12));
  CHECK(out.probability == doctest::Approx(sigmoid(logit)).epsilon(1e-12));
}

TEST_CASE("PAW head single instance and symmetric pair") {
  Rng rng(4);
  PawMilHead head(3, 4, 1);
  randomise(head, rng);
  const auto x = random_bag(rng, 1, 3);
  const auto one = head.forward(x);
  CHECK(one.attention[0] == 1.0);
  CHECK(one.logit == doctest::Approx(one.scores[0]));
  CHECK(std::abs(one.scores[0]) < 1.0);

  // zero attention weights give equal attention: logit is the mean contribution
  auto flat = head;
  const std::size_t a2 = 3 * 4 + 4;
  for (std::size_t i = 0; i < 4; ++i) flat.params()[a2 + i] = 0.0;
  const auto two = random_bag(rng, 2, 3);
  const auto out = flat.forward(two);
  CHECK(out.attention[0] == doctest::Approx(0.5));
  MatrixD r0(1, 3), r1(1, 3);
  for (std::size_t j = 0; j < 3; ++j) {
    r0(0, j) = two(0, j);
    r1(0, j) = two(1, j);
  }
  CHECK(out.logit == doctest::Approx(0.5 * (flat.forward(r0).logit + flat.forward(r1).logit)));
  const double scale = flat.scale();
  CHECK(out.probability == doctest::Approx(sigmoid(scale * out.logit)));
}

TEST_CASE("bag outputs are permutation invariant and padding neutral") {
  Rng rng(6);
  for (auto kind : {HeadKind::Gated, HeadKind::Paw}) {
    auto head = make_head(kind, 5, 3, 8);
    randomise(*head, rng);
    const auto x = float_exact(rng, 4, 5);
    const auto base = forward_bag(*head, padded(x, 4, {0, 1, 2, 3}));
    const auto shuffled = forward_bag(*head, padded(x, 9, {7, 2, 0, 5}));
    CHECK(shuffled.probability == base.probability);
    CHECK(shuffled.logit == base.logit);
    CHECK(shuffled.attention[7] == base.attention[0]);
    CHECK(shuffled.attention[1] == 0.0);
    double sum = 0.0;
    for (double a : shuffled.attention) sum += a;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));

    const auto x1 = float_exact(rng, 1, 5);
    const auto solo = forward_bag(*head, padded(x1, 1, {0}));
    const auto solo_padded = forward_bag(*head, padded(x1, 1000, {0}));
    CHECK(solo.probability == solo_padded.probability);
    CHECK(solo_padded.attention[0] == 1.0);

    EmbeddingBag empty = padded(MatrixD(0, 5), 3, {});
    try {
      forward_bag(*head, empty);
      FAIL("expected AllPaddedBag");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::AllPaddedBag);
    }
  }
}

TEST_CASE("analytic gradients match central differences") {
  Rng rng(12);
  for (auto kind : {HeadKind::Gated, HeadKind::Paw}) {
    for (int trial = 0; trial < 5; ++trial) {
      auto head = make_head(kind, 4, 10 + trial, 6);
      randomise(*head, rng);
      std::vector<DenseBag> bags(3);
      for (auto& b : bags) {
        b.x = random_bag(rng, 1 + rng.below(4), 4);
        b.label = static_cast<int>(rng.below(2));
      }
      std::vector<const DenseBag*> ptrs;
      for (const auto& b : bags) ptrs.push_back(&b);
      std::vector<double> grad(head->param_count(), 0.0);
      loss_and_gradient(*head, ptrs, grad);
      std::vector<double> scratch(head->param_count());
      const double err = oracle::worst_gradient_error(head->params(), grad, [&] {
        return loss_and_gradient(*head, ptrs, scratch);
      });
      CHECK(err <= 1e-4);
    }
  }
}

TEST_CASE("training reduces loss, is seeded, and zero epochs change nothing") {
  synth::BagOptions opt;
  opt.n_bags = 40;
  opt.dim = 8;
  opt.witness_rate = 0.2;
  const auto bags = to_dense(synth::synth_bags(1, opt).bags);
  for (auto kind : {HeadKind::Gated, HeadKind::Paw}) {
    auto head = make_head(kind, 8, 2, 16);
    const std::vector<double> init(head->params().begin(), head->params().end());
    train_head(*head, bags, {4, 1e-3, 0}, 1);
    CHECK(std::equal(init.begin(), init.end(), head->params().begin()));

    int calls = 0;
    const auto hist = train_head(*head, bags, {4, 1e-3, 5}, 1, [&](int, const MilHead&) { ++calls; });
    CHECK(calls == 5);
    REQUIRE(hist.loss.size() == 6);
    CHECK(hist.loss.back() < hist.loss.front());

    auto again = make_head(kind, 8, 2, 16);
    train_head(*again, bags, {4, 1e-3, 5}, 1);
    CHECK(std::equal(again->params().begin(), again->params().end(), head->params().begin()));
  }
  std::vector<DenseBag> one_class(bags.begin(), bags.end());
  for (auto& b : one_class) b.label = 1;
  auto head = make_head(HeadKind::Paw, 8, 0, 16);
  try {
    train_head(*head, one_class, {4, 1e-3, 1}, 0);
    FAIL("expected SingleClassTrainingSet");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::SingleClassTrainingSet);
  }
}

TEST_CASE("AUC against the pairwise definition") {
  const std::vector<int> labels{1, 0, 1, 0};
  const std::vector<double> sep{0.9, 0.1, 0.8, 0.2};
  CHECK(auc(sep, labels) == 1.0);
  const std::vector<double> flat{0.5, 0.5, 0.5, 0.5};
  CHECK(auc(flat, labels) == 0.5);
  Rng rng(3);
  std::vector<double> s(20);
  std::vector<int> l(20);
  for (std::size_t i = 0; i < 20; ++i) {
    s[i] = static_cast<double>(rng.below(6));
    l[i] = static_cast<int>(i % 2);
  }
  CHECK(std::abs(auc(s, l) - oracle::pairwise_auc(s, l)) <= 1e-12);
  const std::vector<int> ones{1, 1};
  const std::vector<double> two{0.1, 0.2};
  CHECK_THROWS_AS(auc(two, ones), Error);
}

TEST_CASE("grouped stratified split invariants hold across seeds") {
  Rng rng(21);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 10 + rng.below(30);
    std::vector<GroupLabel> groups;
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const int label = i < 5 ? 1 : (i < 10 ? 0 : static_cast<int>(rng.below(2)));
      pos += static_cast<std::size_t>(label);
      groups.push_back({"g" + std::to_string(i), label, static_cast<std::size_t>(1 + rng.below(3))});
    }
    const auto plans = grouped_stratified_split(groups, rng.next_u64());
    REQUIRE(plans.size() == kTestSplits);
    std::map<std::string, int> label_of;
    for (const auto& g : groups) label_of[g.group] = g.label;
    std::set<std::string> tested;
    for (const auto& plan : plans) {
      REQUIRE(plan.train.size() == kFolds);
      tested.insert(plan.test.begin(), plan.test.end());
      std::size_t test_pos = 0;
      for (const auto& g : plan.test) test_pos += static_cast<std::size_t>(label_of[g]);
      const double exact = static_cast<double>(pos) / kTestSplits;
      CHECK(std::abs(static_cast<double>(test_pos) - exact) <= 1.0);
      for (std::size_t f = 0; f < kFolds; ++f) {
        std::set<std::string> seen(plan.test.begin(), plan.test.end());
        for (const auto& g : plan.train[f]) CHECK(seen.insert(g).second);
        for (const auto& g : plan.val[f]) CHECK(seen.insert(g).second);
        CHECK(seen.size() == n);
      }
    }
    CHECK(tested.size() == n);  // every group is tested exactly once across splits
  }
}

TEST_CASE("ten balanced groups give one positive and one negative per test split") {
  std::vector<GroupLabel> groups;
  for (int i = 0; i < 10; ++i) groups.push_back({"c" + std::to_string(i), i % 2, 1});
  for (const auto& plan : grouped_stratified_split(groups, 3)) {
    REQUIRE(plan.test.size() == 2);
  }
  std::vector<GroupLabel> three(groups.begin(), groups.begin() + 3);
  try {
    grouped_stratified_split(three, 0);
    FAIL("expected InsufficientGroups");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::InsufficientGroups);
  }
  std::vector<GroupLabel> skewed = groups;
  for (auto& g : skewed) g.label = 0;
  skewed[0].label = 1;
  try {
    grouped_stratified_split(skewed, 0);
    FAIL("expected UnstratifiableLabels");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::UnstratifiableLabels);
  }
}

TEST_CASE("ensemble categories") {
  const std::vector<double> pos(15, 0.3), neg(15, -0.2);
  CHECK(ensemble_category(pos) == 1);
  CHECK(ensemble_category(neg) == -1);
  auto mixed = pos;
  mixed[4] = -0.01;
  CHECK(ensemble_category(mixed) == 0);
  auto zero = pos;
  zero[0] = 0.0;
  CHECK(ensemble_category(zero) == 0);
}

TEST_CASE("ensemble scoring needs the full set of PAW heads") {
  Rng rng(2);
  std::vector<std::shared_ptr<const MilHead>> heads;
  for (int i = 0; i < 15; ++i) {
    auto h = make_head(HeadKind::Paw, 3, static_cast<std::uint64_t>(i), 4);
    randomise(*h, rng);
    heads.push_back(std::move(h));
  }
  const auto bag = padded(float_exact(rng, 3, 3), 5, {4, 0, 2});
  const std::vector<EmbeddingBag> bags{bag};
  const auto scores = ensemble_instance_scores(heads, bags);
  REQUIRE(scores.size() == 3);
  CHECK(scores[0].slot == 0);
  CHECK(scores[0].gland_id == 2);
  CHECK(scores[0].scores.size() == 15);
  CHECK(scores[0].category == ensemble_category(scores[0].scores));

  // rescaling the output scale never changes a score's sign
  std::vector<std::shared_ptr<const MilHead>> rescaled;
  for (const auto& h : heads) {
    auto c = h->clone();
    c->params().back() *= 7.5;
    rescaled.push_back(std::move(c));
  }
  const auto again = ensemble_instance_scores(rescaled, bags);
  for (std::size_t i = 0; i < 3; ++i) CHECK(again[i].category == scores[i].category);

  heads.pop_back();
  try {
    ensemble_instance_scores(heads, bags);
    FAIL("expected MissingHead");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::MissingHead);
  }
}

TEST_CASE("heads round trip through parameter files") {
  Rng rng(5);
  auto head = make_head(HeadKind::Gated, 4, 1, 6);
  randomise(*head, rng);
  const auto path = std::filesystem::temp_directory_path() / "hit_test_head.hitparam";
  save_head(path, *head, {{"note", "x"}});
  nlohmann::json meta;
  const auto back = load_head(path, &meta);
  CHECK(back->kind() == HeadKind::Gated);
  CHECK(back->in_dim() == 4);
  CHECK(std::equal(back->params().begin(), back->params().end(), head->params().begin()));
  CHECK(meta["note"] == "x");
  std::filesystem::remove(path);
}

TEST_CASE("a small benchmark produces one test row per split and repeat") {
  synth::BagOptions opt;
  opt.n_bags = 20;
  opt.dim = 6;
  opt.witness_rate = 0.3;
  const auto sb = synth::synth_bags(7, opt);
  BenchmarkConfig cfg;
  cfg.batch_sizes = {4};
  cfg.learning_rates = {1e-3};
  cfg.epochs = {1, 2};
  cfg.repeats = 2;
  cfg.heads = {HeadKind::Paw};
  cfg.hidden_dim = 8;
  cfg.seed = 1;
  const auto r = run_benchmark({{"semantic", "toy", sb.bags}}, cfg);
  std::size_t val = 0, test = 0;
  for (const auto& row : r.rows) (row.phase == "val" ? val : test) += 1;
  CHECK(val == kTestSplits * kFolds * 2);
  CHECK(test == kTestSplits * 2);
  REQUIRE(r.summaries.size() == 1);
  CHECK(r.summaries[0].models.size() == kTestSplits * 2);
  CHECK(r.summaries[0].selected.size() == kTestSplits);

  // Selection recomputed from the validation rows: best mean AUC, then the
  // lower mean loss, then the earlier grid point.
  for (std::size_t t = 0; t < kTestSplits; ++t) {
    std::vector<std::pair<int, std::pair<double, double>>> means;  // epochs -> (auc, loss)
    for (int e : cfg.epochs) {
      double auc_sum = 0.0, loss_sum = 0.0;
      int auc_n = 0, loss_n = 0;
      for (const auto& row : r.rows) {
        if (row.phase != "val" || row.test_split != t || row.hyper.epochs != e) continue;
        CHECK(std::isfinite(row.val_loss));
        if (!std::isnan(row.val_auc)) auc_sum += row.val_auc, ++auc_n;
        loss_sum += row.val_loss, ++loss_n;
      }
      means.push_back({e, {auc_sum / auc_n, loss_sum / loss_n}});
    }
    auto best = means.front();
    for (const auto& m : means)
      if (m.second.first > best.second.first ||
          (m.second.first == best.second.first && m.second.second < best.second.second))
        best = m;
    CHECK(r.summaries[0].selected[t].epochs == best.first);
  }

  cfg.threads = 3;
  const auto threaded = run_benchmark({{"semantic", "toy", sb.bags}}, cfg);
  CHECK(benchmark_csv(threaded.rows) == benchmark_csv(r.rows));
  CHECK(summary_table(threaded.summaries) == summary_table(r.summaries));
}
