#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hit/error.hpp"

namespace hit {

/// Single-channel raster, row-major.
template <class T>
class Plane {
 public:
  Plane() = default;
  Plane(int width, int height, T fill = T{})
      : width_(width), height_(height),
        data_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill) {
    require(width >= 0 && height >= 0, Errc::InvalidArgument, "negative plane size");
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }

  T& at(int x, int y) { return data_[index(x, y)]; }
  const T& at(int x, int y) const { return data_[index(x, y)]; }

  std::span<T> row(int y) { return {data_.data() + index(0, y), static_cast<std::size_t>(width_)}; }
  std::span<const T> row(int y) const {
    return {data_.data() + index(0, y), static_cast<std::size_t>(width_)};
  }

  std::vector<T>& values() noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }

  bool same_shape(const Plane& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_;
  }

  friend bool operator==(const Plane&, const Plane&) = default;

 private:
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using BinaryPlane = Plane<std::uint8_t>;
using ProbPlane = Plane<float>;

std::size_t population(const BinaryPlane& plane);

/// 8-bit interleaved RGB image.
class RgbImage {
 public:
  RgbImage() = default;
  RgbImage(int width, int height, std::uint8_t fill = 0);
  RgbImage(int width, int height, std::vector<std::uint8_t> pixels);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  bool empty() const noexcept { return width_ == 0 || height_ == 0; }

  std::uint8_t* pixel(int x, int y) { return pixels_.data() + offset(x, y); }
  const std::uint8_t* pixel(int x, int y) const { return pixels_.data() + offset(x, y); }
  void set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    auto* p = pixel(x, y);
    p[0] = r;
    p[1] = g;
    p[2] = b;
  }

  /// Copy of the sub-rectangle; must lie inside the image.
  RgbImage crop(int x, int y, int w, int h) const;

  std::vector<std::uint8_t>& pixels() noexcept { return pixels_; }
  const std::vector<std::uint8_t>& pixels() const noexcept { return pixels_; }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;

 private:
  std::size_t offset(int x, int y) const noexcept {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)) * 3;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

/// Level-0 (40X) slide raster.
class SlideRaster {
 public:
  SlideRaster(std::string slide_id, RgbImage image,
              std::optional<double> microns_per_pixel = std::nullopt);

  const std::string& slide_id() const noexcept { return slide_id_; }
  const RgbImage& image() const noexcept { return image_; }
  int width_px() const noexcept { return image_.width(); }
  int height_px() const noexcept { return image_.height(); }
  std::optional<double> microns_per_pixel() const noexcept { return microns_per_pixel_; }

 private:
  std::string slide_id_;
  RgbImage image_;
  std::optional<double> microns_per_pixel_;
};

enum class TissueClass : std::uint8_t { StromaBackground, Epithelium, Lumen, Nuclei };

std::string_view class_name(TissueClass c) noexcept;
TissueClass parse_class(std::string_view name);

inline constexpr int kDefaultPatchSize = 1024;
inline constexpr int kDefaultStride = 768;
inline constexpr double kDefaultThreshold = 0.5;

struct PatchOrigin {
  int x = 0;
  int y = 0;
  friend auto operator<=>(const PatchOrigin&, const PatchOrigin&) = default;
};

struct PatchGrid {
  int slide_width = 0;
  int slide_height = 0;
  int patch_size = kDefaultPatchSize;
  int stride = kDefaultStride;
  /// Row-major: y outer, x inner.
  std::vector<PatchOrigin> origins;
  std::vector<int> xs;
  std::vector<int> ys;
};

/// Per-pixel class probabilities at 1/downsample resolution.
class ClassProbabilityMap {
 public:
  ClassProbabilityMap() = default;
  ClassProbabilityMap(std::vector<TissueClass> classes, int downsample, int width, int height,
                      float fill = 0.0f);

  const std::vector<TissueClass>& classes() const noexcept { return classes_; }
  int downsample() const noexcept { return downsample_; }
  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }

  bool has(TissueClass c) const noexcept;
  std::size_t index_of(TissueClass c) const;
  ProbPlane& plane(std::size_t i) { return planes_[i]; }
  const ProbPlane& plane(std::size_t i) const { return planes_[i]; }
  ProbPlane& plane(TissueClass c) { return planes_[index_of(c)]; }
  const ProbPlane& plane(TissueClass c) const { return planes_[index_of(c)]; }

  bool same_layout(const ClassProbabilityMap& other) const noexcept;

  /// Largest deviation of the per-pixel class sum from 1.
  double max_simplex_error() const;

  friend bool operator==(const ClassProbabilityMap&, const ClassProbabilityMap&) = default;

 private:
  std::vector<TissueClass> classes_;
  int downsample_ = 1;
  int width_ = 0;
  int height_ = 0;
  std::vector<ProbPlane> planes_;
};

struct CompartmentMaskSet {
  std::vector<TissueClass> classes;
  std::vector<BinaryPlane> planes;
  BinaryPlane gland;
  int downsample = 1;
  double threshold = kDefaultThreshold;

  int width() const noexcept { return gland.width(); }
  int height() const noexcept { return gland.height(); }
  bool has(TissueClass c) const noexcept;
  /// Plane for the class, or an all-off plane when absent.
  BinaryPlane plane_or_empty(TissueClass c) const;
};

/// Prediction for one grid patch at full resolution.
struct PatchPrediction {
  PatchOrigin origin;
  ClassProbabilityMap map;
};

int downsampled_extent(int extent, int downsample) noexcept;

PatchGrid plan_patch_grid(int width_px, int height_px, int patch_size_px = kDefaultPatchSize,
                          int stride_px = kDefaultStride);

/// Mean over covering patches, then block-average pooling. Accumulation walks
/// the grid in row-major order whatever the order of `predictions`.
ClassProbabilityMap stitch_predictions(const PatchGrid& grid,
                                       std::span<const PatchPrediction> predictions,
                                       int downsample_factor, int threads = 1);

/// Block-average pooling of a full-resolution map; edge blocks average the
/// pixels that exist.
ClassProbabilityMap pool_map(const ClassProbabilityMap& map, int downsample_factor);

ClassProbabilityMap fuse_probabilities(const ClassProbabilityMap& a, const ClassProbabilityMap& b);

/// Pixel is on iff probability > threshold. Gland = epithelium OR lumen.
CompartmentMaskSet binarize(const ClassProbabilityMap& map, double threshold = kDefaultThreshold);

/// 2|A∩B| / (|A|+|B|); 1.0 when both are empty.
double dice_score(const BinaryPlane& pred, const BinaryPlane& truth);

}  // namespace hit
