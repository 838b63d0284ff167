#include <filesystem>
#include <vector>

#include "doctest.h"
#include "hit/gland_extraction.hpp"
#include "hit/rng.hpp"
#include "oracles.hpp"

using namespace hit;

namespace {

CompartmentMaskSet masks_from(const BinaryPlane& epi, const BinaryPlane& lum, int d = 1) {
  CompartmentMaskSet m;
  m.classes = {TissueClass::StromaBackground, TissueClass::Epithelium, TissueClass::Lumen};
  BinaryPlane bg(epi.width(), epi.height(), 0);
  m.gland = BinaryPlane(epi.width(), epi.height(), 0);
  for (std::size_t i = 0; i < bg.size(); ++i) {
    m.gland.values()[i] = epi.values()[i] | lum.values()[i];
    bg.values()[i] = !m.gland.values()[i];
  }
  m.planes = {bg, epi, lum};
  m.downsample = d;
  return m;
}

void fill_rect(BinaryPlane& p, int x0, int y0, int w, int h, std::uint8_t v = 1) {
  for (int y = y0; y < y0 + h; ++y)
    for (int x = x0; x < x0 + w; ++x) p.at(x, y) = v;
}

}  // namespace

TEST_CASE("connectivity decides whether diagonal neighbours join") {
  BinaryPlane m(3, 3, 0);
  m.at(0, 0) = 1;
  m.at(1, 1) = 1;
  m.at(2, 0) = 1;
  CHECK(connected_components(m, 8).count == 1);
  const auto four = connected_components(m, 4);
  CHECK(four.count == 3);
  CHECK(four.labels.at(0, 0) == 1);
  CHECK(four.labels.at(2, 0) == 2);
  CHECK(four.labels.at(1, 1) == 3);
  CHECK_THROWS_AS(connected_components(m, 6), Error);
}

TEST_CASE("U-shaped components merge through the union-find pass") {
  BinaryPlane m(5, 3, 0);
  fill_rect(m, 0, 0, 1, 3);
  fill_rect(m, 4, 0, 1, 3);
  fill_rect(m, 0, 2, 5, 1);
  const auto l = connected_components(m, 4);
  CHECK(l.count == 1);
  CHECK(l.labels.at(4, 0) == 1);
}

TEST_CASE("connected components match flood fill on random masks") {
  Rng rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    const int w = 1 + static_cast<int>(rng.below(40));
    const int h = 1 + static_cast<int>(rng.below(40));
    const double density = rng.uniform(0.2, 0.7);
    BinaryPlane m(w, h, 0);
    for (auto& v : m.values()) v = rng.uniform() < density;
    for (int conn : {4, 8}) {
      int count = 0;
      const auto want = oracle::flood_fill_labels(m, conn, &count);
      const auto got = connected_components(m, conn);
      CHECK(got.count == count);
      CHECK(got.labels == want);
    }
  }
}

TEST_CASE("extraction keeps components above the area floor with clipped margins") {
  BinaryPlane epi(100, 80, 0), lum(100, 80, 0);
  fill_rect(epi, 2, 3, 30, 30);
  fill_rect(lum, 10, 10, 10, 10);
  fill_rect(epi, 10, 10, 10, 10, 0);
  fill_rect(epi, 60, 50, 5, 5);  // 25 px, below the floor
  fill_rect(epi, 70, 10, 20, 20);
  SlideRaster slide("s1", RgbImage(100, 80, 200));
  ExtractionOptions opt;
  opt.min_area_px = 100;
  opt.margin_px = 5;
  const auto inst = extract_instances(masks_from(epi, lum), slide, opt);
  REQUIRE(inst.size() == 2);
  CHECK(inst[0].gland_id == 1);
  CHECK(inst[1].gland_id == 2);
  CHECK(inst[0].tight_bbox == BoundingBox{2, 3, 30, 30});
  CHECK(inst[0].bbox == BoundingBox{0, 0, 37, 38});
  CHECK(inst[0].area_px == 900);
  CHECK(population(inst[0].lumen) == 100);
  CHECK(population(inst[0].epithelium) == 800);
  CHECK(inst[1].tight_bbox == BoundingBox{70, 10, 20, 20});
  CHECK(inst[1].slide_id == "s1");

  const auto crop = raw_crop(slide, inst[1]);
  CHECK(crop.width() == inst[1].bbox.w);
  CHECK(crop.height() == inst[1].bbox.h);

  const auto rec = morphometrics(inst[0]);
  CHECK(rec.gland_area_px == 900.0);
  CHECK(rec.rel_lumen_area == doctest::Approx(100.0 / 900.0));
  CHECK(rec.rel_epithelium_area == doctest::Approx(800.0 / 900.0));
  CHECK(rec.rel_stroma_area == doctest::Approx(1.0 - 900.0 / (37.0 * 38.0)));
  CHECK(rec.nuclei_proportion == 0.0);
  REQUIRE(rec.epithelial_nuclei_density.has_value());
  CHECK(*rec.epithelial_nuclei_density == 0.0);
}

TEST_CASE("downsampled masks scale areas and boxes to level 0") {
  BinaryPlane epi(25, 20, 0), lum(25, 20, 0);
  fill_rect(epi, 4, 4, 10, 10);
  SlideRaster slide("s", RgbImage(99, 80));
  ExtractionOptions opt;
  opt.min_area_px = 1600;
  opt.margin_px = 8;
  const auto inst = extract_instances(masks_from(epi, lum, 4), slide, opt);
  REQUIRE(inst.size() == 1);
  CHECK(inst[0].tight_bbox == BoundingBox{16, 16, 40, 40});
  CHECK(inst[0].bbox == BoundingBox{8, 8, 56, 56});
  CHECK(morphometrics(inst[0]).gland_area_px == 1600.0);

  opt.min_area_px = 1601;
  CHECK(extract_instances(masks_from(epi, lum, 4), slide, opt).empty());
  CHECK_THROWS_AS(extract_instances(masks_from(epi, lum, 4), SlideRaster("s", RgbImage(120, 80)), opt),
                  Error);
}

TEST_CASE("nuclei are clipped to the component and counted in the epithelium") {
  BinaryPlane epi(20, 20, 0), lum(20, 20, 0), nuc(20, 20, 0);
  fill_rect(epi, 5, 5, 10, 10);
  nuc.at(6, 6) = 1;
  nuc.at(0, 0) = 1;  // outside every gland
  SlideRaster slide("s", RgbImage(20, 20));
  ExtractionOptions opt;
  opt.min_area_px = 1;
  opt.margin_px = 1;
  const auto inst = extract_instances(masks_from(epi, lum), slide, opt, &nuc);
  REQUIRE(inst.size() == 1);
  CHECK(population(inst[0].nuclei) == 1);
  const auto rec = morphometrics(inst[0]);
  CHECK(*rec.epithelial_nuclei_density == doctest::Approx(0.01));
  CHECK(rec.nuclei_proportion == doctest::Approx(1.0 / 144.0));
  const auto* px = inst[0].crop.pixel(2, 2);
  CHECK(px[0] == kCropNuclei[0]);
}

TEST_CASE("manifest export round trips") {
  BinaryPlane epi(30, 30, 0), lum(30, 30, 0);
  fill_rect(epi, 3, 3, 12, 12);
  fill_rect(epi, 18, 18, 10, 10);
  SlideRaster slide("slideA", RgbImage(30, 30, 128));
  ExtractionOptions opt;
  opt.min_area_px = 10;
  const auto inst = extract_instances(masks_from(epi, lum), slide, opt);
  const auto dir = std::filesystem::temp_directory_path() / "hit_test_manifest";
  std::filesystem::remove_all(dir);
  export_instances(dir, "slideA", inst);
  const auto entries = read_manifest(dir / "slideA");
  REQUIRE(entries.size() == 2);
  CHECK(entries[1].gland_id == 2);
  CHECK(entries[1].bbox == inst[1].bbox);
  CHECK(entries[0].area_px == 144);
  CHECK(std::filesystem::exists(dir / "slideA" / entries[0].crop_file));
  CHECK(std::filesystem::exists(dir / "slideA" / entries[0].mask_file));
  std::filesystem::remove_all(dir);
}
