#include "hit/maps.hpp"

#include <algorithm>
#include <cmath>

#include "hit/image_io.hpp"
#include "hit/parallel.hpp"

namespace hit::maps {

const std::vector<Rgb>& cluster_palette() noexcept {
  static const std::vector<Rgb> palette = {
      {128, 128, 128},  // unassigned
      {31, 119, 180},  {255, 127, 14},  {44, 160, 44},   {214, 39, 40},   {148, 103, 189},
      {140, 86, 75},   {227, 119, 194}, {188, 189, 34},  {23, 190, 207},  {174, 199, 232},
      {255, 187, 120}, {152, 223, 138}, {255, 152, 150}, {197, 176, 213}, {196, 156, 148},
      {247, 182, 210}, {219, 219, 141}, {158, 218, 229}, {57, 59, 121},   {99, 121, 57},
  };
  return palette;
}

Rgb cluster_color(int label) noexcept {
  const auto& p = cluster_palette();
  if (label <= 0) return p[0];
  const auto n = static_cast<int>(p.size()) - 1;
  return p[static_cast<std::size_t>((label - 1) % n + 1)];
}

Rgb diverging_color(double value) noexcept {
  const double v = std::isnan(value) ? 0.0 : std::clamp(value, -1.0, 1.0);
  const double fade = 255.0 * (1.0 - std::abs(v));
  const auto f = static_cast<std::uint8_t>(std::lround(fade));
  if (v >= 0) return {255, f, f};
  return {f, f, 255};
}

RgbImage base_layer(const SlideRaster& slide, int downsample, double alpha) {
  require(downsample >= 1, Errc::InvalidArgument, "render downsample must be >= 1");
  require(alpha >= 0.0 && alpha <= 1.0, Errc::InvalidArgument, "alpha must lie in [0, 1]");
  const auto& img = slide.image();
  const int w = downsampled_extent(img.width(), downsample);
  const int h = downsampled_extent(img.height(), downsample);
  RgbImage out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double sum = 0.0;
      int count = 0;
      for (int yy = y * downsample; yy < std::min(img.height(), (y + 1) * downsample); ++yy) {
        for (int xx = x * downsample; xx < std::min(img.width(), (x + 1) * downsample); ++xx) {
          const auto* p = img.pixel(xx, yy);
          sum += 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
          ++count;
        }
      }
      const auto g = static_cast<std::uint8_t>(std::lround(std::clamp(alpha * sum / count, 0.0, 255.0)));
      out.set(x, y, g, g, g);
    }
  }
  return out;
}

namespace {

// Canvas pixels whose level-0 centre falls on the instance component.
template <class ColorOf>
void paint(OverlayCanvas& canvas, const std::vector<GlandInstance>& instances, int threads, ColorOf color_of) {
  const int r = canvas.downsample;
  auto& img = canvas.image;
  parallel_for(instances.size(), threads, [&](std::size_t i) {
    const auto& g = instances[i];
    const Rgb c = color_of(g);
    const int d = g.downsample;
    const auto& mb = g.mask_bbox;
    const int x0 = (mb.x * d) / r;
    const int y0 = (mb.y * d) / r;
    const int x1 = std::min(img.width(), ((mb.x + mb.w) * d + r - 1) / r);
    const int y1 = std::min(img.height(), ((mb.y + mb.h) * d + r - 1) / r);
    for (int y = y0; y < y1; ++y) {
      // level-0 centre is (y + 0.5) * r; mask pixel = floor(centre / d)
      const int my = static_cast<int>((2 * static_cast<long>(y) * r + r) / (2L * d)) - mb.y;
      if (my < 0 || my >= mb.h) continue;
      for (int x = x0; x < x1; ++x) {
        const int mx = static_cast<int>((2 * static_cast<long>(x) * r + r) / (2L * d)) - mb.x;
        if (mx < 0 || mx >= mb.w) continue;
        if (g.component.at(mx, my)) img.set(x, y, c[0], c[1], c[2]);
      }
    }
  });
  for (const auto& g : instances) canvas.painted_ids.push_back(g.gland_id);
  std::sort(canvas.painted_ids.begin(), canvas.painted_ids.end());
}

}  // namespace

OverlayCanvas render_cluster_map(const SlideRaster& slide, const std::vector<GlandInstance>& instances,
                                 const std::map<int, int>& cluster_of, const RenderOptions& options) {
  for (const auto& g : instances) {
    require(cluster_of.count(g.gland_id) > 0, Errc::MissingLabel,
            "no cluster label for gland " + std::to_string(g.gland_id));
  }
  OverlayCanvas canvas;
  canvas.downsample = options.downsample;
  canvas.image = base_layer(slide, options.downsample, options.alpha);
  paint(canvas, instances, options.threads, [&](const GlandInstance& g) { return cluster_color(cluster_of.at(g.gland_id)); });
  nlohmann::json palette = nlohmann::json::object();
  std::vector<int> labels;
  for (const auto& [id, c] : cluster_of) labels.push_back(c);
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  for (int c : labels) {
    const auto rgb = cluster_color(c);
    palette[std::to_string(c)] = {rgb[0], rgb[1], rgb[2]};
  }
  canvas.legend = {{"kind", "cluster"},
                   {"slide_id", slide.slide_id()},
                   {"palette", palette},
                   {"downsample", options.downsample},
                   {"alpha", options.alpha},
                   {"painted", canvas.painted_ids}};
  return canvas;
}

OverlayCanvas render_score_map(const SlideRaster& slide, const std::vector<GlandInstance>& instances,
                               const std::map<int, double>& score_of, double range,
                               const RenderOptions& options) {
  require(range > 0 && std::isfinite(range), Errc::InvalidArgument, "score range must be > 0");
  for (const auto& g : instances) {
    require(score_of.count(g.gland_id) > 0, Errc::MissingScore,
            "no score for gland " + std::to_string(g.gland_id));
  }
  OverlayCanvas canvas;
  canvas.downsample = options.downsample;
  canvas.image = base_layer(slide, options.downsample, options.alpha);
  paint(canvas, instances, options.threads,
        [&](const GlandInstance& g) { return diverging_color(score_of.at(g.gland_id) / range); });
  canvas.legend = {{"kind", "score"},
                   {"slide_id", slide.slide_id()},
                   {"colormap", {{"-1", {0, 0, 255}}, {"0", {255, 255, 255}}, {"1", {255, 0, 0}}}},
                   {"score_range", {-range, range}},
                   {"downsample", options.downsample},
                   {"alpha", options.alpha},
                   {"painted", canvas.painted_ids}};
  return canvas;
}

void save_overlay(const std::filesystem::path& png_path, const OverlayCanvas& canvas) {
  io::write_png_rgb(png_path, canvas.image);
  auto legend = png_path;
  legend.replace_extension(".json");
  io::write_text(legend, canvas.legend.dump(2) + "\n");
}

}  // namespace hit::maps
