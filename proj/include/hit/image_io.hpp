#pragma once

#include <cstdint>
#include <filesystem>

#include "hit/raster.hpp"

namespace hit::io {

namespace fs = std::filesystem;

RgbImage read_png_rgb(const fs::path& path);
void write_png_rgb(const fs::path& path, const RgbImage& image);

Plane<std::uint16_t> read_png_gray16(const fs::path& path);
void write_png_gray16(const fs::path& path, const Plane<std::uint16_t>& plane);

/// Masks are stored as 1-bit grayscale; any non-zero sample reads back as on.
BinaryPlane read_png_mask(const fs::path& path);
void write_png_mask(const fs::path& path, const BinaryPlane& mask);

/// Slide PNG plus optional `<stem>.json` sidecar {slide_id, microns_per_pixel}.
/// Without a sidecar the file stem is the slide id.
SlideRaster load_slide(const fs::path& png_path);
void save_slide(const fs::path& png_path, const SlideRaster& slide);

/// Directory with `prob_<class>.png` (probability x 65535) and
/// `probabilities.json` {classes, downsample_factor, width, height, threshold}.
void save_probability_map(const fs::path& dir, const ClassProbabilityMap& map);
ClassProbabilityMap load_probability_map(const fs::path& dir);

/// Directory with `mask_<class>.png`, `mask_gland.png` and `masks.json`.
void save_mask_set(const fs::path& dir, const CompartmentMaskSet& masks);
CompartmentMaskSet load_mask_set(const fs::path& dir);

std::string read_text(const fs::path& path);
void write_text(const fs::path& path, const std::string& text);

}  // namespace hit::io
