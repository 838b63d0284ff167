#include "hit/segmenters.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "hit/parallel.hpp"

namespace hit {

std::string_view segmenter_kind_name(SegmenterKind kind) noexcept {
  switch (kind) {
    case SegmenterKind::Oracle: return "oracle";
    case SegmenterKind::StainHeuristic: return "stain_heuristic";
    case SegmenterKind::External: return "external";
  }
  return "unknown";
}

SegmenterKind parse_segmenter_kind(std::string_view name) {
  if (name == "oracle") return SegmenterKind::Oracle;
  if (name == "stain_heuristic" || name == "stain") return SegmenterKind::StainHeuristic;
  if (name == "external") return SegmenterKind::External;
  fail(Errc::ConfigError, "unknown segmenter kind '" + std::string(name) + "'");
}

namespace {

void check_patch(const Segmenter& s, const Patch& patch) {
  const int p = s.descriptor().patch_size;
  if (patch.pixels.width() != p || patch.pixels.height() != p) {
    fail(Errc::BadPatchSize, "expected " + std::to_string(p) + "x" + std::to_string(p) +
                                 " patch, got " + std::to_string(patch.pixels.width()) + "x" +
                                 std::to_string(patch.pixels.height()));
  }
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

ClassProbabilityMap Segmenter::segment_patch(const Patch& patch) const {
  check_patch(*this, patch);
  return predict(patch);
}

ClassProbabilityMap Segmenter::segment_nuclei(const Patch& patch) const {
  check_patch(*this, patch);
  return predict_nuclei(patch);
}

// ---- oracle ---------------------------------------------------------------

OracleSegmenter::OracleSegmenter(CompartmentMaskSet truth, BinaryPlane nuclei, int patch_size) {
  require(truth.downsample == 1, Errc::ShapeMismatch, "oracle truth must be at level 0");
  descriptor_.kind = SegmenterKind::Oracle;
  descriptor_.patch_size = patch_size;
  epithelium_ = truth.plane_or_empty(TissueClass::Epithelium);
  lumen_ = truth.plane_or_empty(TissueClass::Lumen);
  nuclei_ = nuclei.size() ? std::move(nuclei) : BinaryPlane(truth.width(), truth.height(), 0);
  require(nuclei_.same_shape(epithelium_), Errc::ShapeMismatch,
          "oracle nuclei mask differs in size from compartment masks");
}

ClassProbabilityMap OracleSegmenter::predict(const Patch& region) const {
  const int w = region.pixels.width();
  const int h = region.pixels.height();
  require(region.origin.x >= 0 && region.origin.y >= 0 && region.origin.x + w <= epithelium_.width() &&
              region.origin.y + h <= epithelium_.height(),
          Errc::ShapeMismatch, "patch lies outside the oracle's ground truth");
  ClassProbabilityMap out(descriptor_.classes, 1, w, h);
  auto& bg = out.plane(TissueClass::StromaBackground);
  auto& ep = out.plane(TissueClass::Epithelium);
  auto& lu = out.plane(TissueClass::Lumen);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int sx = region.origin.x + x;
      const int sy = region.origin.y + y;
      if (epithelium_.at(sx, sy)) {
        ep.at(x, y) = 1.0f;
      } else if (lumen_.at(sx, sy)) {
        lu.at(x, y) = 1.0f;
      } else {
        bg.at(x, y) = 1.0f;
      }
    }
  }
  return out;
}

ClassProbabilityMap OracleSegmenter::predict_nuclei(const Patch& region) const {
  const int w = region.pixels.width();
  const int h = region.pixels.height();
  require(region.origin.x >= 0 && region.origin.y >= 0 && region.origin.x + w <= nuclei_.width() &&
              region.origin.y + h <= nuclei_.height(),
          Errc::ShapeMismatch, "patch lies outside the oracle's ground truth");
  ClassProbabilityMap out({TissueClass::Nuclei}, 1, w, h);
  auto& nu = out.plane(0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      nu.at(x, y) = nuclei_.at(region.origin.x + x, region.origin.y + y) ? 1.0f : 0.0f;
  return out;
}

// ---- stain heuristic --------------------------------------------------------

StainDensities deconvolve_he(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  // rows: hematoxylin, eosin, DAB stain vectors in OD space, unit-normalised
  static const auto inverse = [] {
    double m[3][3] = {{0.650, 0.704, 0.286}, {0.072, 0.990, 0.105}, {0.268, 0.570, 0.776}};
    for (auto& row : m) {
      const double n = std::sqrt(row[0] * row[0] + row[1] * row[1] + row[2] * row[2]);
      for (double& v : row) v /= n;
    }
    const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                       m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                       m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    std::array<std::array<double, 3>, 3> inv{};
    inv[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
    inv[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
    inv[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
    inv[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
    inv[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
    inv[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
    inv[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
    inv[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
    inv[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
    return inv;
  }();
  const double od[3] = {-std::log10((r + 1.0) / 256.0), -std::log10((g + 1.0) / 256.0),
                        -std::log10((b + 1.0) / 256.0)};
  // concentrations c solve od = c * M, i.e. c = od * M^-1
  double c[3];
  for (int j = 0; j < 3; ++j) {
    c[j] = od[0] * inverse[0][j] + od[1] * inverse[1][j] + od[2] * inverse[2][j];
  }
  return {std::max(0.0, c[0]), std::max(0.0, c[1]), c[2], od[0] + od[1] + od[2]};
}

StainHeuristicSegmenter::StainHeuristicSegmenter(StainHeuristicParams params, int patch_size)
    : params_(params) {
  descriptor_.kind = SegmenterKind::StainHeuristic;
  descriptor_.patch_size = patch_size;
  require(params_.tissue_softness > 0 && params_.epithelium_softness > 0 &&
              params_.lumen_softness > 0 && params_.nuclei_softness > 0,
          Errc::ConfigError, "stain heuristic softness parameters must be > 0");
}

ClassProbabilityMap StainHeuristicSegmenter::predict(const Patch& region) const {
  const int w = region.pixels.width();
  const int h = region.pixels.height();
  ClassProbabilityMap out(descriptor_.classes, 1, w, h);
  auto& bg = out.plane(TissueClass::StromaBackground);
  auto& ep = out.plane(TissueClass::Epithelium);
  auto& lu = out.plane(TissueClass::Lumen);
  const auto& p = params_;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto* px = region.pixels.pixel(x, y);
      const auto s = deconvolve_he(px[0], px[1], px[2]);
      const double tissue = sigmoid((s.total_od - p.tissue_od) / p.tissue_softness);
      const double epi = sigmoid((s.hematoxylin - p.epithelium_h) / p.epithelium_softness);
      const double tint =
          sigmoid((static_cast<double>(px[2]) - px[0] - p.lumen_tint) / p.lumen_softness);
      const double pe = tissue * epi;
      const double pl = (1.0 - tissue) * tint;
      ep.at(x, y) = static_cast<float>(pe);
      lu.at(x, y) = static_cast<float>(pl);
      bg.at(x, y) = static_cast<float>(1.0 - pe - pl);
    }
  }
  return out;
}

ClassProbabilityMap StainHeuristicSegmenter::predict_nuclei(const Patch& region) const {
  const int w = region.pixels.width();
  const int h = region.pixels.height();
  ClassProbabilityMap out({TissueClass::Nuclei}, 1, w, h);
  auto& nu = out.plane(0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto* px = region.pixels.pixel(x, y);
      const auto s = deconvolve_he(px[0], px[1], px[2]);
      nu.at(x, y) = static_cast<float>(
          sigmoid((s.hematoxylin - params_.nuclei_h) / params_.nuclei_softness));
    }
  }
  return out;
}

// ---- external ---------------------------------------------------------------

ExternalSegmenter::ExternalSegmenter(std::filesystem::path model_path, int patch_size)
    : model_path_(std::move(model_path)) {
  descriptor_.kind = SegmenterKind::External;
  descriptor_.patch_size = patch_size;
}

bool ExternalSegmenter::runtime_available() noexcept { return false; }

ClassProbabilityMap ExternalSegmenter::predict(const Patch&) const {
  fail(Errc::ExternalModelUnavailable,
       "external segmenter '" + model_path_.string() +
           "' needs a model runtime; this build has none (use --segmenter oracle or stain)");
}

ClassProbabilityMap ExternalSegmenter::predict_nuclei(const Patch& region) const {
  return predict(region);
}

ClassProbabilityMap softmax_logits(const std::vector<TissueClass>& classes,
                                   std::span<const ProbPlane> logits) {
  require(!logits.empty() && logits.size() == classes.size(), Errc::ShapeMismatch,
          "one logit plane per class required");
  const int w = logits[0].width();
  const int h = logits[0].height();
  for (const auto& l : logits) require(l.width() == w && l.height() == h, Errc::ShapeMismatch, "logit planes differ in size");
  ClassProbabilityMap out(classes, 1, w, h);
  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  std::vector<double> e(classes.size());
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -INFINITY;
    for (const auto& l : logits) mx = std::max(mx, static_cast<double>(l.values()[i]));
    double s = 0.0;
    for (std::size_t c = 0; c < classes.size(); ++c) {
      e[c] = std::exp(static_cast<double>(logits[c].values()[i]) - mx);
      s += e[c];
    }
    for (std::size_t c = 0; c < classes.size(); ++c) out.plane(c).values()[i] = static_cast<float>(e[c] / s);
  }
  return out;
}

// ---- whole-slide driver ------------------------------------------------------

namespace {

template <class Predict>
ClassProbabilityMap run_grid(const SlideRaster& slide, const Segmenter& segmenter, int stride_px,
                             int downsample_factor, int threads, Predict predict) {
  const int patch = segmenter.descriptor().patch_size;
  const auto grid = plan_patch_grid(slide.width_px(), slide.height_px(), patch, stride_px);
  std::vector<PatchPrediction> predictions(grid.origins.size());
  parallel_for(grid.origins.size(), threads, [&](std::size_t i) {
    const auto o = grid.origins[i];
    Patch p{o, slide.image().crop(o.x, o.y, patch, patch)};
    predictions[i] = PatchPrediction{o, predict(p)};
  });
  return stitch_predictions(grid, predictions, downsample_factor, threads);
}

}  // namespace

ClassProbabilityMap predict_slide(const SlideRaster& slide, const Segmenter& segmenter,
                                  int stride_px, int downsample_factor, int threads) {
  return run_grid(slide, segmenter, stride_px, downsample_factor, threads,
                  [&](const Patch& p) { return segmenter.segment_patch(p); });
}

ClassProbabilityMap predict_slide_nuclei(const SlideRaster& slide, const Segmenter& segmenter,
                                         int stride_px, int downsample_factor, int threads) {
  return run_grid(slide, segmenter, stride_px, downsample_factor, threads,
                  [&](const Patch& p) { return segmenter.segment_nuclei(p); });
}

}  // namespace hit
