#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "hit/embeddings.hpp"
#include "hit/matrix.hpp"

namespace hit::mil {

inline constexpr std::size_t kHiddenDim = 128;

enum class HeadKind { Gated, Paw };
std::string_view head_kind_name(HeadKind kind) noexcept;
HeadKind parse_head_kind(std::string_view name);

/// Valid instances of one bag in canonical (lexicographic row) order, so that
/// every computation on it is independent of the input instance order.
struct DenseBag {
  MatrixD x;                       // n_valid x dim
  std::vector<std::size_t> origin;  // row -> instance slot in the source bag
  int label = 0;
  std::string case_id;
  std::string slide_id;
};

DenseBag to_dense(const EmbeddingBag& bag);
std::vector<DenseBag> to_dense(const std::vector<EmbeddingBag>& bags);

struct MilOutput {
  double probability = 0.0;
  double logit = 0.0;              // pre-sigmoid value; for PAW the unscaled sum of scores
  std::vector<double> attention;   // one per row of the dense bag
  std::vector<double> scores;      // PAW only: attention * contribution
};

class MilHead {
 public:
  virtual ~MilHead() = default;

  virtual HeadKind kind() const noexcept = 0;
  std::size_t in_dim() const noexcept { return in_; }
  std::size_t hidden_dim() const noexcept { return hidden_; }

  std::span<double> params() noexcept { return params_; }
  std::span<const double> params() const noexcept { return params_; }
  std::size_t param_count() const noexcept { return params_.size(); }

  virtual MilOutput forward(const MatrixD& x) const = 0;

  /// Binary cross-entropy of the bag against `label`. Adds weight * dLoss/dParams
  /// to `grad` and returns the unweighted loss.
  virtual double accumulate_gradient(const MatrixD& x, int label, double weight,
                                     std::span<double> grad) const = 0;

  virtual std::unique_ptr<MilHead> clone() const = 0;

 protected:
  MilHead(std::size_t in_dim, std::size_t hidden_dim, std::size_t count)
      : in_(in_dim), hidden_(hidden_dim), params_(count, 0.0) {}

  std::size_t in_;
  std::size_t hidden_;
  std::vector<double> params_;
};

/// Gated attention pooling followed by an affine bag classifier.
/// Layout: V (h x d), bV, U (h x d), bU, w (h), c (d), c0.
class GatedAttentionHead final : public MilHead {
 public:
  GatedAttentionHead(std::size_t in_dim, std::size_t hidden_dim, std::uint64_t seed);
  HeadKind kind() const noexcept override { return HeadKind::Gated; }
  MilOutput forward(const MatrixD& x) const override;
  double accumulate_gradient(const MatrixD& x, int label, double weight,
                             std::span<double> grad) const override;
  std::unique_ptr<MilHead> clone() const override;

  static std::size_t count_for(std::size_t d, std::size_t h) { return 2 * h * d + 3 * h + d + 1; }
};

/// Separate attention and signed contribution branches; the bag logit is the
/// attention-weighted contribution sum times a learnable scale.
/// Layout: A1 (h x d), bA1, a2 (h), C1 (h x d), bC1, c2 (h), c0, scale.
class PawMilHead final : public MilHead {
 public:
  PawMilHead(std::size_t in_dim, std::size_t hidden_dim, std::uint64_t seed);
  HeadKind kind() const noexcept override { return HeadKind::Paw; }
  MilOutput forward(const MatrixD& x) const override;
  double accumulate_gradient(const MatrixD& x, int label, double weight,
                             std::span<double> grad) const override;
  std::unique_ptr<MilHead> clone() const override;

  double scale() const noexcept { return params_.back(); }
  static std::size_t count_for(std::size_t d, std::size_t h) { return 2 * h * d + 4 * h + 2; }
};

std::unique_ptr<MilHead> make_head(HeadKind kind, std::size_t in_dim, std::uint64_t seed,
                                   std::size_t hidden_dim = kHiddenDim);

/// Per-slot outputs for a padded bag: padded slots get attention 0 and score 0.
struct BagOutput {
  double probability = 0.0;
  double logit = 0.0;
  std::vector<double> attention;  // capacity
  std::vector<double> scores;     // capacity, PAW only
};
BagOutput forward_gated(const GatedAttentionHead& head, const EmbeddingBag& bag);
BagOutput forward_paw(const PawMilHead& head, const EmbeddingBag& bag);
BagOutput forward_bag(const MilHead& head, const EmbeddingBag& bag);

/// Mean loss over `bags` and its gradient.
double loss_and_gradient(const MilHead& head, std::span<const DenseBag* const> bags,
                         std::span<double> grad);

// ---- training -------------------------------------------------------------------

struct Hyperparams {
  int batch_size = 4;
  double learning_rate = 1e-4;
  int epochs = 8;

  friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

struct TrainOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Recompute the full training loss after every epoch. When false the
  /// history holds the running mean of the mini-batch losses instead.
  bool full_epoch_loss = true;
};

struct TrainHistory {
  std::vector<double> loss;  // index 0 = before training, then one per epoch
};

/// Called after each epoch with the epoch number and the current head.
using EpochCallback = std::function<void(int epoch, const MilHead& head)>;

/// Adam on mean binary cross-entropy over shuffled mini-batches.
TrainHistory train_head(MilHead& head, const std::vector<DenseBag>& bags, const Hyperparams& hyper,
                        std::uint64_t seed, const EpochCallback& on_epoch = {},
                        const TrainOptions& options = {});

// ---- evaluation -----------------------------------------------------------------

/// Mann-Whitney AUC with half credit for ties.
double auc(std::span<const double> scores, std::span<const int> labels);

std::vector<double> predict(const MilHead& head, const std::vector<DenseBag>& bags);

// ---- splits ---------------------------------------------------------------------

struct GroupLabel {
  std::string group;  // case id
  int label = 0;
  std::size_t size = 1;  // bags in the group
};

struct FoldPlan {
  std::size_t test_split = 0;
  std::vector<std::string> test;
  std::vector<std::vector<std::string>> train;  // per fold
  std::vector<std::vector<std::string>> val;    // per fold
};

inline constexpr std::size_t kTestSplits = 5;
inline constexpr std::size_t kFolds = 5;

/// One plan per test split. Groups are dealt greedily, largest first
/// (ties by id), to the fold holding the fewest groups of the same label,
/// then the fewest bags, then the lowest index.
std::vector<FoldPlan> grouped_stratified_split(const std::vector<GroupLabel>& groups, std::uint64_t seed,
                                               std::size_t test_splits = kTestSplits,
                                               std::size_t folds = kFolds);

// ---- benchmark ------------------------------------------------------------------

struct BenchmarkArm {
  std::string tiling_mode;  // "semantic" or "grid"
  std::string encoder_tag;
  std::vector<EmbeddingBag> bags;
};

struct BenchmarkConfig {
  std::vector<int> batch_sizes{4, 8};
  std::vector<double> learning_rates{1e-4, 1e-3};
  std::vector<int> epochs{8, 16, 32};
  std::size_t repeats = 3;
  std::size_t test_splits = kTestSplits;
  std::size_t folds = kFolds;
  std::vector<HeadKind> heads{HeadKind::Gated, HeadKind::Paw};
  std::string label = "label";
  bool shuffle_labels = false;  // permutation-null control, at case level
  std::uint64_t seed = 0;
  int threads = 1;
  std::size_t hidden_dim = kHiddenDim;
};

struct BenchmarkRow {
  std::string tiling_mode;
  std::string encoder_tag;
  std::string label;
  HeadKind head = HeadKind::Paw;
  std::string phase;  // "val" or "test"
  std::size_t test_split = 0;
  std::size_t fold = 0;    // val rows only
  std::size_t repeat = 0;  // test rows only
  Hyperparams hyper;
  double val_auc = 0.0;
  double val_loss = 0.0;  // mean cross-entropy on the validation fold
  double test_auc = 0.0;
};

struct ArmSummary {
  std::string tiling_mode;
  std::string encoder_tag;
  HeadKind head = HeadKind::Paw;
  std::vector<Hyperparams> selected;  // per test split
  double mean_test_auc = 0.0;
  double sd_test_auc = 0.0;
  std::vector<std::shared_ptr<const MilHead>> models;  // test split major, then repeat
};

struct BenchmarkResult {
  std::vector<BenchmarkRow> rows;
  std::vector<ArmSummary> summaries;
};

BenchmarkResult run_benchmark(const std::vector<BenchmarkArm>& arms, const BenchmarkConfig& config);

std::string benchmark_csv(const std::vector<BenchmarkRow>& rows);
std::string summary_table(const std::vector<ArmSummary>& summaries);

// ---- ensemble scoring -------------------------------------------------------------

inline constexpr std::size_t kEnsembleSize = 15;

/// +1 when every score is > 0, -1 when every score is < 0, else 0.
int ensemble_category(std::span<const double> scores);

struct InstanceScores {
  std::string slide_id;
  int gland_id = -1;
  std::size_t slot = 0;
  std::vector<double> scores;  // one per model
  int category = 0;
};

std::vector<InstanceScores> ensemble_instance_scores(const std::vector<std::shared_ptr<const MilHead>>& heads,
                                                     const std::vector<EmbeddingBag>& bags,
                                                     std::size_t expected = kEnsembleSize);

// ---- persistence ------------------------------------------------------------------

void save_head(const std::filesystem::path& path, const MilHead& head, const nlohmann::json& metadata);
std::unique_ptr<MilHead> load_head(const std::filesystem::path& path, nlohmann::json* metadata = nullptr);

}  // namespace hit::mil
