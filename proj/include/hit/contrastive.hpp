#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "hit/embeddings.hpp"
#include "hit/matrix.hpp"
#include "hit/rng.hpp"

namespace hit::cl {

inline constexpr double kDefaultMargin = 0.75;
inline constexpr std::size_t kProjectionDim = 128;
inline constexpr std::size_t kHiddenDim = 256;
inline constexpr std::size_t kDefaultBatch = 128;

/// Per-feature z-scoring with statistics from the training split.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;  // 1 / sd, or 1 for constant features

  static Standardizer fit(const MatrixD& rows);
  static Standardizer identity(std::size_t dim);
  MatrixD apply(const MatrixD& rows) const;
  void apply(std::span<const double> in, std::span<double> out) const;
};

/// in -> hidden (tanh) -> out, then L2 normalisation.
class ProjectionHead {
 public:
  ProjectionHead() = default;
  ProjectionHead(std::size_t in_dim, std::size_t hidden_dim, std::size_t out_dim, std::uint64_t seed);

  std::size_t in_dim() const noexcept { return in_; }
  std::size_t hidden_dim() const noexcept { return hidden_; }
  std::size_t out_dim() const noexcept { return out_; }

  /// All parameters, contiguous: W1 (hidden x in), b1, W2 (out x hidden), b2.
  std::span<double> params() noexcept { return params_; }
  std::span<const double> params() const noexcept { return params_; }
  std::size_t param_count() const noexcept { return params_.size(); }

  const double* w1() const noexcept { return params_.data(); }
  const double* b1() const noexcept { return w1() + hidden_ * in_; }
  const double* w2() const noexcept { return b1() + hidden_; }
  const double* b2() const noexcept { return w2() + out_ * hidden_; }

  /// Unit-norm projection of one (already standardised) input.
  void project(std::span<const double> x, std::span<double> y) const;
  MatrixD project(const MatrixD& inputs) const;

  friend bool operator==(const ProjectionHead&, const ProjectionHead&) = default;

 private:
  std::size_t in_ = 0;
  std::size_t hidden_ = 0;
  std::size_t out_ = 0;
  std::vector<double> params_;
};

double triplet_loss(double d_ap, double d_an, double margin = kDefaultMargin);

struct Triplet {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;
  double d_ap = 0.0;
  double d_an = 0.0;
};

/// For every anchor with at least one positive: farthest same-group row and
/// nearest other-group row (lowest index on ties). Rows of `projections`
/// are compared by Euclidean distance.
std::vector<Triplet> mine_batch_hard(const MatrixD& projections, std::span<const std::int64_t> groups);

struct LossAndGradient {
  double loss = 0.0;
  std::vector<double> gradient;  // same layout as ProjectionHead::params
  std::vector<Triplet> triplets;
};

/// Mean batch-hard triplet loss over a batch of standardised inputs.
double batch_loss(const ProjectionHead& head, const MatrixD& inputs,
                  std::span<const std::int64_t> groups, double margin = kDefaultMargin);
LossAndGradient batch_loss_and_gradient(const ProjectionHead& head, const MatrixD& inputs,
                                        std::span<const std::int64_t> groups,
                                        double margin = kDefaultMargin);

/// Embeddings of augmented views; rows sharing a group are views of one gland.
struct ViewSet {
  MatrixF vectors;
  std::vector<std::int64_t> groups;
};

struct ColorJitter {
  double brightness = 0.4;
  double contrast = 0.4;
  double saturation = 0.4;
};

/// Random horizontal/vertical flips and colour jitter.
RgbImage augment_crop(const RgbImage& crop, Rng& rng, const ColorJitter& jitter = {});

/// `views_per_gland` augmented encodings of every input.
ViewSet build_view_set(const std::vector<EncoderInput>& inputs, const std::string& encoder_tag,
                       int views_per_gland, std::uint64_t seed, int threads = 1,
                       const ColorJitter& jitter = {});

struct TrainConfig {
  int epochs = 25;
  std::size_t batch_size = kDefaultBatch;
  double learning_rate = 1e-3;
  double margin = kDefaultMargin;
  std::uint64_t seed = 0;
  double train_fraction = 0.7;
  double val_fraction = 0.2;
  std::vector<int> checkpoint_epochs{1, 3, 5, 25};
  std::size_t hidden_dim = kHiddenDim;
  std::size_t out_dim = kProjectionDim;
};

struct Checkpoint {
  int epoch = 0;
  ProjectionHead head;
  double val_loss = 0.0;
};

struct SplitGroups {
  std::vector<std::int64_t> train, val, test;
};

struct TrainResult {
  Standardizer standardizer;
  ProjectionHead initial;
  ProjectionHead final_head;
  std::vector<Checkpoint> checkpoints;
  std::vector<double> val_loss;  // index = epoch, entry 0 before training
  std::vector<double> train_loss;  // mean batch loss per epoch, entry 0 unused
  SplitGroups split;
};

/// Group-level 70-20-10 split (views of a gland never straddle sets).
SplitGroups split_groups(std::span<const std::int64_t> groups, double train_fraction,
                         double val_fraction, std::uint64_t seed);

TrainResult train_projection_head(const ViewSet& views, const TrainConfig& config);

/// Standardise, project, and return a unit-norm store of the head's out dim.
EmbeddingStore project_embeddings(const ProjectionHead& head, const Standardizer& standardizer,
                                  const EmbeddingStore& store);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint,
                     const Standardizer& standardizer, double margin, std::uint64_t seed);

struct LoadedCheckpoint {
  Checkpoint checkpoint;
  Standardizer standardizer;
  double margin = kDefaultMargin;
  std::uint64_t seed = 0;
};
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace hit::cl
