#include <algorithm>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "hit/config.hpp"
#include "hit/error.hpp"

using namespace hit;

TEST_CASE("defaults are valid and round trip through JSON") {
  const PipelineConfig c;
  CHECK(c.violations().empty());
  CHECK(c.patch_size == 1024);
  CHECK(c.stride == 768);
  CHECK(c.cl_margin == 0.75);
  const auto back = PipelineConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
}

TEST_CASE("overrides apply and every violation is reported") {
  const auto c = PipelineConfig::from_json(
      {{"stride", 2000}, {"downsample", 3}, {"threshold", 1.5}, {"bogus", 1}, {"k_max", "twenty"}});
  const auto v = c.violations();
  auto mentions = [&](const std::string& key) {
    return std::any_of(v.begin(), v.end(), [&](const std::string& m) { return m.find(key) != std::string::npos; });
  };
  CHECK(mentions("stride"));
  CHECK(mentions("downsample"));
  CHECK(mentions("threshold"));
  CHECK(mentions("bogus"));
  CHECK(mentions("k_max"));
  try {
    c.validate();
    FAIL("expected ConfigError");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ConfigError);
    CHECK(exit_code_for(e.code()) == 2);
  }
}

TEST_CASE("valid overrides take effect") {
  const auto c = PipelineConfig::from_json({{"stride", 512}, {"mil_epochs", {8, 16}}, {"seed", 99}});
  CHECK(c.violations().empty());
  CHECK(c.stride == 512);
  CHECK(c.mil_epochs == std::vector<int>{8, 16});
  CHECK(c.seed == 99u);
}

TEST_CASE("load reads a file and rejects malformed JSON") {
  const auto dir = std::filesystem::temp_directory_path() / "hit_test_config";
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "ok.json") << R"({"min_area_px": 500})";
  CHECK(PipelineConfig::load(dir / "ok.json").min_area_px == 500);
  std::ofstream(dir / "bad.json") << "{min_area_px: ";
  CHECK_THROWS_AS(PipelineConfig::load(dir / "bad.json"), Error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("exit codes by failure class") {
  CHECK(exit_code_for(Errc::ConfigError) == 2);
  CHECK(exit_code_for(Errc::MissingPatch) == 3);
  CHECK(exit_code_for(Errc::NumericFailure) == 4);
  CHECK(errc_name(Errc::KTooLarge) == "KTooLarge");
}
