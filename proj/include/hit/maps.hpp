#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include "json.hpp"

#include "hit/gland_extraction.hpp"
#include "hit/raster.hpp"

namespace hit::maps {

using Rgb = std::array<std::uint8_t, 3>;

/// Cluster colours indexed by label; entry 0 is the colour for "unassigned".
const std::vector<Rgb>& cluster_palette() noexcept;
/// Colour for a 1-based cluster label, cycling once the palette is exhausted.
Rgb cluster_color(int label) noexcept;

/// Diverging map: -1 blue, 0 white, +1 red, linear in between. Values are
/// clamped to [-1, 1].
Rgb diverging_color(double value) noexcept;

struct RenderOptions {
  int downsample = 1;  // canvas pixel = downsample x downsample level-0 pixels
  double alpha = 0.6;  // brightness of the grayscale base layer
  int threads = 1;
};

struct OverlayCanvas {
  RgbImage image;
  int downsample = 1;
  nlohmann::json legend;
  std::vector<int> painted_ids;  // ascending
};

/// Block-averaged grayscale of the slide scaled by alpha.
RgbImage base_layer(const SlideRaster& slide, int downsample, double alpha);

/// Paints each instance's component with the colour of its cluster label.
OverlayCanvas render_cluster_map(const SlideRaster& slide, const std::vector<GlandInstance>& instances,
                                 const std::map<int, int>& cluster_of, const RenderOptions& options = {});

/// Paints each instance with diverging_color(score / range).
OverlayCanvas render_score_map(const SlideRaster& slide, const std::vector<GlandInstance>& instances,
                               const std::map<int, double>& score_of, double range = 1.0,
                               const RenderOptions& options = {});

/// Writes the PNG and a JSON legend next to it (same stem, .json).
void save_overlay(const std::filesystem::path& png_path, const OverlayCanvas& canvas);

}  // namespace hit::maps
