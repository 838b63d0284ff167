#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hit/gland_extraction.hpp"
#include "hit/matrix.hpp"
#include "hit/raster.hpp"
#include "hit/segmenters.hpp"

namespace hit {

inline constexpr int kEncoderInputSize = 224;
inline constexpr std::size_t kEmbeddingDim = 512;
inline constexpr std::size_t kDefaultMaxInstances = 1000;

struct ChannelNormalization {
  std::array<double, 3> mean{0.485, 0.456, 0.406};
  std::array<double, 3> stddev{0.229, 0.224, 0.225};
};

/// Interleaved HWC float image.
struct ImageTensor {
  int width = 0;
  int height = 0;
  std::vector<float> values;

  float at(int x, int y, int c) const {
    return values[(static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) * 3 +
                  static_cast<std::size_t>(c)];
  }
};

/// Bilinear resize with half-pixel centres and edge clamping; values in [0,1].
ImageTensor resize_bilinear(const RgbImage& image, int width, int height);

/// Stretch to size x size (aspect ratio is not preserved) and normalise per channel.
ImageTensor preprocess_crop(const RgbImage& crop, const ChannelNormalization& norm = {},
                            int size = kEncoderInputSize);

struct EncoderInput {
  RgbImage crop;
  std::optional<MorphometricRecord> morphometrics;
};

class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual const std::string& tag() const noexcept = 0;
  virtual std::size_t dim() const noexcept { return kEmbeddingDim; }
  virtual std::vector<float> encode(const EncoderInput& input) const = 0;
};

/// Known tags: "hit-baseline-v1" (thumbnail, histograms, morphometrics) and
/// "hit-randproj-v1" (fixed random projection of the same features).
std::unique_ptr<Encoder> make_encoder(const std::string& tag, const ChannelNormalization& norm = {});
std::vector<std::string> known_encoder_tags();

/// Baseline feature layout: 192 thumbnail, 96 histogram, 6 morphometric, zero padding.
inline constexpr std::size_t kThumbnailFeatures = 8 * 8 * 3;
inline constexpr std::size_t kHistogramFeatures = 32 * 3;
inline constexpr std::size_t kMorphometricFeatures = 6;
inline constexpr std::size_t kMorphometricOffset = kThumbnailFeatures + kHistogramFeatures;

struct EmbeddingStore {
  std::string slide_id;
  std::string encoder_tag;
  MatrixF vectors;  // n x dim
  std::vector<int> gland_ids;
  std::vector<BoundingBox> bboxes;

  std::size_t size() const noexcept { return vectors.rows(); }
  std::size_t dim() const noexcept { return vectors.cols(); }
  void validate() const;

  friend bool operator==(const EmbeddingStore&, const EmbeddingStore&) = default;
};

EmbeddingStore encode_crops(const std::string& encoder_tag, const std::string& slide_id,
                            const std::vector<EncoderInput>& inputs,
                            const std::vector<int>& gland_ids,
                            const std::vector<BoundingBox>& bboxes, int threads = 1,
                            const ChannelNormalization& norm = {});

/// JSON header line {slide_id, dim, n, encoder_tag, gland_ids, bboxes}, then
/// n*dim little-endian float32 values.
void write_store(const std::filesystem::path& path, const EmbeddingStore& store);
EmbeddingStore read_store(const std::filesystem::path& path);

// ---- labels -------------------------------------------------------------------

enum class Gene : std::size_t { ZEB1, ZEB2, SNAI1, SNAI2, CDH1, MYC };
inline constexpr std::size_t kGeneCount = 6;
std::string_view gene_column(Gene g) noexcept;

struct CaseLabels {
  std::string case_id;
  std::optional<int> bcr;
  std::array<std::optional<int>, kGeneCount> gains{};
};

class LabelTable {
 public:
  void add(CaseLabels labels);
  bool contains(const std::string& case_id) const;
  const CaseLabels& at(const std::string& case_id) const;
  const std::vector<CaseLabels>& cases() const noexcept { return cases_; }

  /// Exact case id match first, otherwise the longest case id that prefixes
  /// the slide id (slide barcodes extend case barcodes).
  std::optional<std::string> case_for_slide(const std::string& slide_id) const;

  /// CSV with header case_id,bcr,zeb1,zeb2,snai1,snai2,cdh1,myc. Empty or NA
  /// cells are unknown.
  static LabelTable parse_csv(const std::string& text);
  static LabelTable read_csv(const std::filesystem::path& path);
  std::string to_csv() const;

 private:
  std::vector<CaseLabels> cases_;
};

struct DerivedLabel {
  int value = 0;
  std::vector<std::string> warnings;
};

/// 1 iff any of ZEB1, ZEB2, SNAI1, SNAI2, CDH1 shows a copy-number gain.
/// Missing flags count as no gain and add a warning.
DerivedLabel derive_emt_label(const LabelTable& table, const std::string& case_id);

enum class LabelKind { Bcr, Emt, Myc };
std::string_view label_kind_name(LabelKind kind) noexcept;
LabelKind parse_label_kind(std::string_view name);

/// Binary label of the requested kind, or nullopt when unknown (BCR only).
std::optional<int> case_label(const LabelTable& table, const std::string& case_id, LabelKind kind,
                              std::vector<std::string>* warnings = nullptr);

// ---- bags ---------------------------------------------------------------------

struct EmbeddingBag {
  std::string case_id;
  std::string slide_id;
  int label = 0;
  MatrixF instances;               // capacity x dim; padded rows are zero
  std::vector<std::uint8_t> valid;  // 1 = real instance
  std::vector<int> gland_ids;      // -1 for padding
  std::size_t n_valid = 0;

  std::size_t capacity() const noexcept { return instances.rows(); }
  std::size_t dim() const noexcept { return instances.cols(); }
};

/// Uniform subsample without replacement to max_instances (seeded per slide),
/// then zero padding up to max_instances.
std::vector<EmbeddingBag> assemble_bags(const std::vector<EmbeddingStore>& stores,
                                        const LabelTable& table, LabelKind kind,
                                        std::size_t max_instances = kDefaultMaxInstances,
                                        std::uint64_t seed = 0,
                                        std::vector<std::string>* warnings = nullptr);

/// Stable 64-bit FNV-1a hash, used to key per-slide random streams.
std::uint64_t stable_hash(std::string_view text) noexcept;

// ---- grid tiling ----------------------------------------------------------------

struct GridTile {
  BoundingBox bbox;
  RgbImage pixels;
  double tissue_fraction = 0.0;
};

/// Non-overlapping tiles kept when at least `min_tissue` of their pixels are
/// tissue under the stain heuristic's optical-density rule.
std::vector<GridTile> grid_tiles(const SlideRaster& slide, int tile_px = kEncoderInputSize,
                                 double min_tissue = 0.5, const StainHeuristicParams& params = {});

}  // namespace hit
