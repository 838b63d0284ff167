#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "hit/image_io.hpp"
#include "hit/params_io.hpp"
#include "hit/rng.hpp"

using namespace hit;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("rgb, gray16 and mask PNGs round trip") {
  TempDir dir("hit_test_png");
  Rng rng(1);
  RgbImage img(13, 7);
  for (auto& v : img.pixels()) v = static_cast<std::uint8_t>(rng.below(256));
  io::write_png_rgb(dir.path / "a.png", img);
  CHECK(io::read_png_rgb(dir.path / "a.png") == img);

  Plane<std::uint16_t> g(5, 9);
  for (auto& v : g.values()) v = static_cast<std::uint16_t>(rng.below(65536));
  io::write_png_gray16(dir.path / "g.png", g);
  CHECK(io::read_png_gray16(dir.path / "g.png") == g);

  BinaryPlane m(11, 3);
  for (auto& v : m.values()) v = rng.uniform() < 0.5;
  io::write_png_mask(dir.path / "m.png", m);
  CHECK(io::read_png_mask(dir.path / "m.png") == m);

  std::ofstream(dir.path / "junk.png") << "not a png";
  try {
    io::read_png_rgb(dir.path / "junk.png");
    FAIL("expected FormatError");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::FormatError);
  }
  CHECK_THROWS_AS(io::read_png_rgb(dir.path / "missing.png"), Error);
}

TEST_CASE("slides carry their sidecar metadata") {
  TempDir dir("hit_test_slide");
  SlideRaster s("case7-01", RgbImage(4, 4, 9), 0.25);
  io::save_slide(dir.path / "x.png", s);
  const auto back = io::load_slide(dir.path / "x.png");
  CHECK(back.slide_id() == "case7-01");
  CHECK(back.microns_per_pixel() == 0.25);
  CHECK(back.image() == s.image());

  io::write_png_rgb(dir.path / "bare.png", RgbImage(2, 2));
  CHECK(io::load_slide(dir.path / "bare.png").slide_id() == "bare");
}

TEST_CASE("probability maps and mask sets round trip") {
  TempDir dir("hit_test_maps");
  ClassProbabilityMap m({TissueClass::StromaBackground, TissueClass::Epithelium}, 2, 6, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 6; ++x) {
      m.plane(std::size_t{1}).at(x, y) = static_cast<float>(x) / 5.0f;
      m.plane(std::size_t{0}).at(x, y) = 1.0f - static_cast<float>(x) / 5.0f;
    }
  io::save_probability_map(dir.path / "p", m);
  const auto back = io::load_probability_map(dir.path / "p");
  CHECK(back.same_layout(m));
  for (std::size_t i = 0; i < m.plane(std::size_t{1}).size(); ++i)
    CHECK(std::abs(back.plane(std::size_t{1}).values()[i] - m.plane(std::size_t{1}).values()[i]) <= 1.0 / 65535.0);

  const auto masks = binarize(m);
  io::save_mask_set(dir.path / "k", masks);
  const auto mb = io::load_mask_set(dir.path / "k");
  CHECK(mb.gland == masks.gland);
  CHECK(mb.downsample == 2);
  CHECK(mb.classes == masks.classes);
}

TEST_CASE("parameter files round trip and reject corruption") {
  TempDir dir("hit_test_param");
  io::ParamFile f{"mil_head", {{"head", "paw"}, {"dim", 3}}, {1.5, -2.25, 1e-300}};
  io::write_param_file(dir.path / "h.hitparam", f);
  const auto back = io::read_param_file(dir.path / "h.hitparam");
  CHECK(back.kind == "mil_head");
  CHECK(back.metadata == f.metadata);
  CHECK(back.values == f.values);

  std::ofstream(dir.path / "bad.hitparam", std::ios::binary) << "HITPARXM";
  try {
    io::read_param_file(dir.path / "bad.hitparam");
    FAIL("expected FormatError");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::FormatError);
  }
}
