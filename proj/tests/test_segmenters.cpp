#include <cmath>
#include <vector>

#include "doctest.h"
#include "hit/raster.hpp"
#include "hit/segmenters.hpp"
#include "hit/synth.hpp"

using namespace hit;

namespace {

std::uint8_t channel_for(double od) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(256.0 * std::pow(10.0, -od) - 1.0, 0.0, 255.0)));
}

CompartmentMaskSet square_truth(int size, int x0, int y0, int side) {
  CompartmentMaskSet m;
  m.classes = {TissueClass::StromaBackground, TissueClass::Epithelium, TissueClass::Lumen};
  BinaryPlane epi(size, size, 0), lum(size, size, 0), bg(size, size, 1);
  for (int y = y0; y < y0 + side; ++y)
    for (int x = x0; x < x0 + side; ++x) {
      const bool inner = x > x0 + 1 && x < x0 + side - 2 && y > y0 + 1 && y < y0 + side - 2;
      (inner ? lum : epi).at(x, y) = 1;
      bg.at(x, y) = 0;
    }
  m.planes = {bg, epi, lum};
  m.gland = BinaryPlane(size, size, 0);
  for (std::size_t i = 0; i < m.gland.size(); ++i) m.gland.values()[i] = epi.values()[i] | lum.values()[i];
  return m;
}

}  // namespace

TEST_CASE("colour deconvolution separates pure stains") {
  const double h[3] = {0.650, 0.704, 0.286};
  const double n = std::sqrt(h[0] * h[0] + h[1] * h[1] + h[2] * h[2]);
  const double c = 0.6;
  const auto s = deconvolve_he(channel_for(c * h[0] / n), channel_for(c * h[1] / n), channel_for(c * h[2] / n));
  // 8-bit quantisation limits the recovery to about 0.01 OD
  CHECK(s.hematoxylin == doctest::Approx(c).epsilon(0.03));
  CHECK(s.eosin < 0.02);

  const auto glass = deconvolve_he(255, 255, 255);
  CHECK(glass.total_od == doctest::Approx(0.0));
  CHECK(glass.hematoxylin == doctest::Approx(0.0));
}

TEST_CASE("stain heuristic labels the synthetic palette") {
  StainHeuristicSegmenter seg({}, 4);
  Patch patch{{0, 0}, RgbImage(4, 1)};
  patch.pixels.set(0, 0, synth::kStroma[0], synth::kStroma[1], synth::kStroma[2]);
  patch.pixels.set(1, 0, synth::kEpithelium[0], synth::kEpithelium[1], synth::kEpithelium[2]);
  patch.pixels.set(2, 0, synth::kLumen[0], synth::kLumen[1], synth::kLumen[2]);
  patch.pixels.set(3, 0, synth::kNuclei[0], synth::kNuclei[1], synth::kNuclei[2]);
  const auto p = seg.predict(patch);
  CHECK(p.max_simplex_error() < 1e-6);
  CHECK(p.plane(TissueClass::StromaBackground).at(0, 0) > 0.9f);
  CHECK(p.plane(TissueClass::Epithelium).at(1, 0) > 0.9f);
  CHECK(p.plane(TissueClass::Lumen).at(2, 0) > 0.9f);
  CHECK(p.plane(TissueClass::Epithelium).at(3, 0) > 0.9f);
  const auto nuc = seg.predict_nuclei(patch);
  CHECK(nuc.plane(std::size_t{0}).at(3, 0) > 0.9f);
  CHECK(nuc.plane(std::size_t{0}).at(1, 0) < 0.1f);
  CHECK(nuc.plane(std::size_t{0}).at(0, 0) < 0.1f);
}

TEST_CASE("segment_patch enforces the patch size") {
  StainHeuristicSegmenter seg({}, 8);
  try {
    seg.segment_patch({{0, 0}, RgbImage(7, 8)});
    FAIL("expected BadPatchSize");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::BadPatchSize);
  }
  CHECK(seg.segment_patch({{0, 0}, RgbImage(8, 8)}).width() == 8);
}

TEST_CASE("oracle segmenter reads the truth and stitches back to it") {
  const auto truth = square_truth(40, 5, 9, 20);
  OracleSegmenter oracle(truth, BinaryPlane(40, 40, 0), 16);
  SlideRaster slide("s", RgbImage(40, 40, 255));
  const auto probs = predict_slide(slide, oracle, 12, 1, 2);
  const auto masks = binarize(probs);
  CHECK(masks.gland == truth.gland);
  CHECK(masks.plane_or_empty(TissueClass::Lumen) == truth.planes[2]);
  CHECK(probs.max_simplex_error() < 1e-6);

  const auto d2 = predict_slide(slide, oracle, 12, 2, 1);
  const auto whole = oracle.predict({{0, 0}, RgbImage(40, 40)});
  const auto pooled = pool_map(whole, 2);
  for (std::size_t c = 0; c < 3; ++c) CHECK(d2.plane(c) == pooled.plane(c));
}

TEST_CASE("oracle rejects truth at the wrong level and regions outside it") {
  auto truth = square_truth(20, 2, 2, 8);
  truth.downsample = 2;
  CHECK_THROWS_AS(OracleSegmenter(truth, BinaryPlane()), Error);
  truth.downsample = 1;
  OracleSegmenter oracle(truth, BinaryPlane(), 8);
  CHECK_THROWS_AS(oracle.predict({{15, 15}, RgbImage(8, 8)}), Error);
  CHECK_THROWS_AS(OracleSegmenter(truth, BinaryPlane(10, 10)), Error);
}

TEST_CASE("softmax over logit planes") {
  ProbPlane a(2, 1, 0.0f), b(2, 1, 0.0f);
  b.at(1, 0) = std::log(3.0f);
  std::vector<ProbPlane> logits{a, b};
  const auto p = softmax_logits({TissueClass::StromaBackground, TissueClass::Epithelium}, logits);
  CHECK(p.plane(std::size_t{0}).at(0, 0) == doctest::Approx(0.5));
  CHECK(p.plane(std::size_t{1}).at(1, 0) == doctest::Approx(0.75));
  CHECK_THROWS_AS(softmax_logits({TissueClass::Epithelium}, logits), Error);
}

TEST_CASE("external segmenter reports the missing runtime") {
  ExternalSegmenter ext("model.onnx", 4);
  CHECK_FALSE(ExternalSegmenter::runtime_available());
  try {
    ext.segment_patch({{0, 0}, RgbImage(4, 4)});
    FAIL("expected ExternalModelUnavailable");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ExternalModelUnavailable);
    CHECK(exit_code_for(e.code()) == 3);
  }
}

TEST_CASE("segmenter kind names") {
  CHECK(parse_segmenter_kind("oracle") == SegmenterKind::Oracle);
  CHECK(parse_segmenter_kind("stain") == SegmenterKind::StainHeuristic);
  CHECK(parse_segmenter_kind(segmenter_kind_name(SegmenterKind::External)) == SegmenterKind::External);
  CHECK_THROWS_AS(parse_segmenter_kind("unet"), Error);
}
