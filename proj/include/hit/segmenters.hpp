#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hit/raster.hpp"

namespace hit {

enum class SegmenterKind { Oracle, StainHeuristic, External };

std::string_view segmenter_kind_name(SegmenterKind kind) noexcept;
SegmenterKind parse_segmenter_kind(std::string_view name);

struct SegmenterDescriptor {
  SegmenterKind kind = SegmenterKind::StainHeuristic;
  std::vector<TissueClass> classes{TissueClass::StromaBackground, TissueClass::Epithelium,
                                   TissueClass::Lumen};
  int patch_size = kDefaultPatchSize;
};

struct Patch {
  PatchOrigin origin;
  RgbImage pixels;
};

/// Per-patch segmentation contract. Implementations are pixel-local and
/// stateless after construction, so concurrent calls are safe.
class Segmenter {
 public:
  virtual ~Segmenter() = default;

  virtual const SegmenterDescriptor& descriptor() const noexcept = 0;

  /// Class probabilities for an arbitrary region (no size check).
  virtual ClassProbabilityMap predict(const Patch& region) const = 0;
  /// Single-class nuclei probability map for an arbitrary region.
  virtual ClassProbabilityMap predict_nuclei(const Patch& region) const = 0;

  /// Contract entry points; reject patches of the wrong size.
  ClassProbabilityMap segment_patch(const Patch& patch) const;
  ClassProbabilityMap segment_nuclei(const Patch& patch) const;
};

/// Reads probabilities straight off ground-truth masks held at level 0.
class OracleSegmenter final : public Segmenter {
 public:
  OracleSegmenter(CompartmentMaskSet truth, BinaryPlane nuclei, int patch_size = kDefaultPatchSize);

  const SegmenterDescriptor& descriptor() const noexcept override { return descriptor_; }
  ClassProbabilityMap predict(const Patch& region) const override;
  ClassProbabilityMap predict_nuclei(const Patch& region) const override;

 private:
  SegmenterDescriptor descriptor_;
  BinaryPlane epithelium_;
  BinaryPlane lumen_;
  BinaryPlane nuclei_;
};

/// Fixed-matrix H&E colour deconvolution followed by soft thresholds.
struct StainHeuristicParams {
  double tissue_od = 0.25;        // total optical density separating tissue from glass
  double tissue_softness = 0.03;
  double epithelium_h = 0.30;     // hematoxylin density marking epithelium
  double epithelium_softness = 0.04;
  double lumen_tint = 12.0;       // blue minus red, in 8-bit levels, marking lumen content
  double lumen_softness = 2.0;
  double nuclei_h = 0.80;
  double nuclei_softness = 0.05;
};

struct StainDensities {
  double hematoxylin = 0.0;
  double eosin = 0.0;
  double residual = 0.0;
  double total_od = 0.0;
};

/// Ruifrok-Johnston H&E(-DAB) deconvolution of one 8-bit RGB pixel.
StainDensities deconvolve_he(std::uint8_t r, std::uint8_t g, std::uint8_t b);

class StainHeuristicSegmenter final : public Segmenter {
 public:
  explicit StainHeuristicSegmenter(StainHeuristicParams params = {},
                                   int patch_size = kDefaultPatchSize);

  const SegmenterDescriptor& descriptor() const noexcept override { return descriptor_; }
  ClassProbabilityMap predict(const Patch& region) const override;
  ClassProbabilityMap predict_nuclei(const Patch& region) const override;

  const StainHeuristicParams& params() const noexcept { return params_; }

 private:
  SegmenterDescriptor descriptor_;
  StainHeuristicParams params_;
};

/// Adapter for an externally trained network stored in a model-interchange
/// file. Only functional when built with a model runtime; otherwise every
/// call raises ExternalModelUnavailable.
class ExternalSegmenter final : public Segmenter {
 public:
  explicit ExternalSegmenter(std::filesystem::path model_path, int patch_size = kDefaultPatchSize);

  const SegmenterDescriptor& descriptor() const noexcept override { return descriptor_; }
  ClassProbabilityMap predict(const Patch& region) const override;
  ClassProbabilityMap predict_nuclei(const Patch& region) const override;

  static bool runtime_available() noexcept;

 private:
  SegmenterDescriptor descriptor_;
  std::filesystem::path model_path_;
};

/// Per-pixel softmax over class logit planes (the external adapter's output stage).
ClassProbabilityMap softmax_logits(const std::vector<TissueClass>& classes,
                                   std::span<const ProbPlane> logits);

/// Runs the segmenter over an overlapping grid and stitches the result.
ClassProbabilityMap predict_slide(const SlideRaster& slide, const Segmenter& segmenter,
                                  int stride_px, int downsample_factor, int threads = 1);

/// Same for the nuclei model.
ClassProbabilityMap predict_slide_nuclei(const SlideRaster& slide, const Segmenter& segmenter,
                                         int stride_px, int downsample_factor, int threads = 1);

}  // namespace hit
