#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hit/embeddings.hpp"
#include "hit/raster.hpp"

namespace hit::synth {

// Reference colours of the generated H&E-like rendering.
inline constexpr std::uint8_t kStroma[3] = {230, 160, 190};
inline constexpr std::uint8_t kEpithelium[3] = {120, 80, 160};
inline constexpr std::uint8_t kLumen[3] = {228, 228, 250};
inline constexpr std::uint8_t kNuclei[3] = {45, 28, 105};

/// One elliptical gland: an epithelial ring around a lumen, both sharing
/// centre and orientation.
struct SynthGland {
  double cx = 0.0;
  double cy = 0.0;
  double angle = 0.0;  // radians
  double outer_a = 0.0;
  double outer_b = 0.0;
  double inner_a = 0.0;
  double inner_b = 0.0;
  bool atypical = false;  // small lumen, crowded nuclei

  double gland_area() const noexcept;       // pi * a * b of the outer ellipse
  double lumen_area() const noexcept;
  double epithelium_area() const noexcept;  // ring
};

struct SlideOptions {
  int width = 2048;
  int height = 2048;
  int n_glands = 12;
  double atypical_fraction = 0.0;
  double min_outer_radius = 70.0;
  double max_outer_radius = 130.0;
  int gap_px = 12;  // minimum clearance between gland bounding circles
  int max_attempts = 20000;
  std::string slide_id = "synth";
};

struct SynthSlide {
  SlideRaster slide;
  CompartmentMaskSet truth;  // level 0: stroma, epithelium, lumen + gland
  BinaryPlane nuclei;
  std::vector<SynthGland> glands;
};

/// Deterministic for a given seed. PlacementFailure if the glands cannot be
/// placed without overlap within max_attempts draws.
SynthSlide synth_slide(std::uint64_t seed, const SlideOptions& options);

/// Label used by the cohort generator: positive cases carry a ZEB1 gain
/// and atypical glands.
struct CohortOptions {
  int n_cases = 10;
  SlideOptions slide;
  double positive_atypical_fraction = 0.4;
};

struct Cohort {
  std::vector<SynthSlide> slides;
  LabelTable labels;
};

Cohort synth_cohort(std::uint64_t seed, const CohortOptions& options);

struct BagOptions {
  int n_bags = 200;
  int dim = 64;
  double witness_rate = 0.1;
  int min_instances = 8;
  int max_instances = 12;
  double separation = 6.0;  // witness centre distance in background sd units
};

struct SynthBags {
  std::vector<EmbeddingBag> bags;
  std::vector<std::vector<std::uint8_t>> witness;  // per bag slot
  std::vector<double> witness_direction;          // unit vector
};

/// Background instances ~ N(0, I); witnesses ~ N(separation * u, I). Half the
/// bags are positive and each positive bag holds at least one witness.
SynthBags synth_bags(std::uint64_t seed, const BagOptions& options);

}  // namespace hit::synth
