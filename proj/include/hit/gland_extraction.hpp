#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hit/raster.hpp"

namespace hit {

struct LabeledPlane {
  Plane<std::int32_t> labels;  // 0 = background, 1..count
  int count = 0;
};

/// Two-pass union-find labelling. Labels are numbered in raster order of each
/// component's first pixel.
LabeledPlane connected_components(const BinaryPlane& mask, int connectivity = 8);

struct BoundingBox {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct GlandInstance {
  int gland_id = 0;
  std::string slide_id;
  int downsample = 1;
  BoundingBox bbox;        // level 0, margin included, clipped to the slide
  BoundingBox tight_bbox;  // level 0, no margin
  BoundingBox mask_bbox;   // mask pixels, margin included; frame of the planes below
  BinaryPlane component;
  BinaryPlane epithelium;  // component and epithelium, lumen taking precedence
  BinaryPlane lumen;
  BinaryPlane nuclei;      // nuclei inside the component
  RgbImage crop;           // compartment-coded rendering
  std::size_t area_px = 0;  // population of `component`
};

struct ExtractionOptions {
  int connectivity = 8;
  int min_area_px = 1000;  // level-0 pixels
  int margin_px = 32;      // level-0 pixels
  int threads = 1;
};

inline constexpr std::uint8_t kCropBackground[3] = {0, 0, 0};
inline constexpr std::uint8_t kCropEpithelium[3] = {0, 255, 0};
inline constexpr std::uint8_t kCropLumen[3] = {0, 0, 255};
inline constexpr std::uint8_t kCropNuclei[3] = {255, 0, 0};

/// One instance per component of the gland plane whose level-0 area reaches
/// min_area_px. `nuclei`, when given, must match the mask resolution.
std::vector<GlandInstance> extract_instances(const CompartmentMaskSet& masks,
                                             const SlideRaster& slide,
                                             const ExtractionOptions& options = {},
                                             const BinaryPlane* nuclei = nullptr);

/// Raw H&E pixels under an instance's level-0 bounding box.
RgbImage raw_crop(const SlideRaster& slide, const GlandInstance& instance);

struct MorphometricRecord {
  double gland_area_px = 0.0;  // level-0 pixels
  double rel_lumen_area = 0.0;
  double rel_epithelium_area = 0.0;
  double rel_stroma_area = 0.0;
  double nuclei_proportion = 0.0;
  /// Absent when the gland has no epithelium.
  std::optional<double> epithelial_nuclei_density;
};

MorphometricRecord morphometrics(const GlandInstance& instance);

struct ManifestEntry {
  std::string slide_id;
  int gland_id = 0;
  int downsample = 1;
  BoundingBox bbox;
  BoundingBox tight_bbox;
  BoundingBox mask_bbox;
  std::size_t area_px = 0;
  MorphometricRecord morphometrics;
  std::string crop_file;
  std::string mask_file;
};

/// Writes `<out_dir>/<slide_id>/<gland_id>.png`, `<gland_id>_mask.png` and
/// `manifest.jsonl` (one JSON object per instance, ascending gland id).
void export_instances(const std::filesystem::path& out_dir, const std::string& slide_id,
                      const std::vector<GlandInstance>& instances);

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& slide_dir);

}  // namespace hit
