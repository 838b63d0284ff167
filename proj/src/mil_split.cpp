#include <algorithm>
#include <array>
#include <numeric>
#include <set>

#include "hit/mil.hpp"
#include "hit/rng.hpp"

namespace hit::mil {

namespace {

std::vector<std::vector<std::string>> deal(std::vector<GroupLabel> groups, std::size_t folds) {
  std::sort(groups.begin(), groups.end(), [](const GroupLabel& a, const GroupLabel& b) {
    if (a.size != b.size) return a.size > b.size;
    return a.group < b.group;
  });
  std::vector<std::vector<std::string>> out(folds);
  std::vector<std::array<std::size_t, 2>> label_count(folds, {0, 0});
  std::vector<std::size_t> bags(folds, 0);
  for (const auto& g : groups) {
    std::size_t best = 0;
    for (std::size_t f = 1; f < folds; ++f) {
      const auto key = [&](std::size_t i) { return std::pair(label_count[i][g.label], bags[i]); };
      if (key(f) < key(best)) best = f;
    }
    out[best].push_back(g.group);
    ++label_count[best][g.label];
    bags[best] += g.size;
  }
  for (auto& f : out) std::sort(f.begin(), f.end());
  return out;
}

template <class T>
void permute(std::vector<T>& v, std::uint64_t seed) {
  Rng rng(seed);
  rng.shuffle(v);
}

}  // namespace

std::vector<FoldPlan> grouped_stratified_split(const std::vector<GroupLabel>& groups, std::uint64_t seed,
                                               std::size_t test_splits, std::size_t folds) {
  require(test_splits >= 2 && folds >= 2, Errc::InvalidArgument, "need at least two splits and two folds");
  std::set<std::string> ids;
  std::array<std::size_t, 2> per_label{0, 0};
  for (const auto& g : groups) {
    require(g.label == 0 || g.label == 1, Errc::InvalidArgument, "group labels must be 0 or 1");
    require(ids.insert(g.group).second, Errc::InvalidArgument, "duplicate group '" + g.group + "'");
    ++per_label[static_cast<std::size_t>(g.label)];
  }
  require(groups.size() >= 2 * test_splits, Errc::InsufficientGroups,
          "need at least " + std::to_string(2 * test_splits) + " groups, got " + std::to_string(groups.size()));
  require(per_label[0] >= test_splits && per_label[1] >= test_splits, Errc::UnstratifiableLabels,
          "each class needs at least one group per test split (" + std::to_string(per_label[0]) +
              " negative, " + std::to_string(per_label[1]) + " positive)");

  auto outer = deal(groups, test_splits);
  permute(outer, derive_seed(seed, 0));
  std::vector<FoldPlan> plans;
  for (std::size_t t = 0; t < test_splits; ++t) {
    FoldPlan plan;
    plan.test_split = t;
    plan.test = outer[t];
    const std::set<std::string> test_set(plan.test.begin(), plan.test.end());
    std::vector<GroupLabel> rest;
    for (const auto& g : groups) {
      if (!test_set.count(g.group)) rest.push_back(g);
    }
    auto inner = deal(rest, folds);
    permute(inner, derive_seed(seed, 1 + t));
    for (std::size_t f = 0; f < folds; ++f) {
      const std::set<std::string> val_set(inner[f].begin(), inner[f].end());
      std::vector<std::string> train;
      for (const auto& g : rest) {
        if (!val_set.count(g.group)) train.push_back(g.group);
      }
      std::sort(train.begin(), train.end());
      plan.val.push_back(inner[f]);
      plan.train.push_back(std::move(train));
    }
    plans.push_back(std::move(plan));
  }
  return plans;
}

}  // namespace hit::mil
