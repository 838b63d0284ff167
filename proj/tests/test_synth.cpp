#include <cmath>
#include <set>

#include "doctest.h"
#include "hit/gland_extraction.hpp"
#include "hit/synth.hpp"

using namespace hit;
using namespace hit::synth;

TEST_CASE("synthetic slides are deterministic with non-overlapping glands") {
  SlideOptions opt;
  opt.width = opt.height = 800;
  opt.n_glands = 5;
  opt.min_outer_radius = 40;
  opt.max_outer_radius = 70;
  const auto a = synth_slide(3, opt);
  const auto b = synth_slide(3, opt);
  CHECK(a.slide.image() == b.slide.image());
  CHECK(a.truth.gland == b.truth.gland);
  CHECK(a.glands.size() == 5);
  CHECK(connected_components(a.truth.gland, 8).count == 5);
  CHECK_FALSE(synth_slide(4, opt).slide.image() == a.slide.image());

  double analytic = 0.0;
  for (const auto& g : a.glands) {
    analytic += g.gland_area();
    CHECK(g.lumen_area() + g.epithelium_area() == doctest::Approx(g.gland_area()));
  }
  CHECK(static_cast<double>(population(a.truth.gland)) == doctest::Approx(analytic).epsilon(0.01));

  // epithelium and lumen never overlap and nuclei stay in the epithelium
  const auto epi = a.truth.plane_or_empty(TissueClass::Epithelium);
  const auto lum = a.truth.plane_or_empty(TissueClass::Lumen);
  for (std::size_t i = 0; i < epi.size(); ++i) {
    CHECK_FALSE((epi.values()[i] && lum.values()[i]));
    if (a.nuclei.values()[i]) CHECK(a.truth.gland.values()[i] == 1);
  }
}

TEST_CASE("placement failure when the slide is too crowded") {
  SlideOptions opt;
  opt.width = opt.height = 300;
  opt.n_glands = 30;
  opt.max_attempts = 200;
  try {
    synth_slide(1, opt);
    FAIL("expected PlacementFailure");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::PlacementFailure);
  }
}

TEST_CASE("cohorts label cases and plant atypical glands in positives") {
  CohortOptions opt;
  opt.n_cases = 4;
  opt.slide.width = opt.slide.height = 700;
  opt.slide.n_glands = 4;
  opt.slide.min_outer_radius = 40;
  opt.slide.max_outer_radius = 60;
  opt.positive_atypical_fraction = 0.5;
  const auto c = synth_cohort(5, opt);
  REQUIRE(c.slides.size() == 4);
  int positives = 0;
  for (const auto& s : c.slides) {
    const auto case_id = c.labels.case_for_slide(s.slide.slide_id());
    REQUIRE(case_id.has_value());
    const int label = *case_label(c.labels, *case_id, LabelKind::Emt);
    positives += label;
    int atypical = 0;
    for (const auto& g : s.glands) atypical += g.atypical;
    CHECK((label == 1) == (atypical > 0));
  }
  CHECK(positives == 2);
}

TEST_CASE("synthetic bags plant witnesses in positive bags only") {
  BagOptions opt;
  const auto sb = synth_bags(9, opt);
  REQUIRE(sb.bags.size() == 200);
  int positives = 0;
  std::set<std::string> ids;
  for (std::size_t b = 0; b < sb.bags.size(); ++b) {
    const auto& bag = sb.bags[b];
    ids.insert(bag.case_id);
    positives += bag.label;
    CHECK(bag.n_valid >= 8);
    CHECK(bag.n_valid <= 12);
    int witnesses = 0;
    for (std::size_t i = 0; i < bag.capacity(); ++i) witnesses += sb.witness[b][i];
    CHECK((bag.label == 1) == (witnesses > 0));
  }
  CHECK(positives == 100);
  CHECK(ids.size() == 200);

  // a nearest-centroid rule recovers witnesses almost perfectly at 6 sd
  std::size_t right = 0, total = 0;
  for (std::size_t b = 0; b < sb.bags.size(); ++b) {
    const auto& bag = sb.bags[b];
    for (std::size_t i = 0; i < bag.n_valid; ++i) {
      double proj = 0.0;
      for (std::size_t j = 0; j < bag.dim(); ++j) proj += bag.instances(i, j) * sb.witness_direction[j];
      const bool called = proj > 0.5 * opt.separation;
      right += called == (sb.witness[b][i] == 1);
      ++total;
    }
  }
  CHECK(static_cast<double>(right) / static_cast<double>(total) >= 0.99);

  BagOptions all = opt;
  all.witness_rate = 1.0;
  const auto full = synth_bags(2, all);
  for (std::size_t b = 0; b < full.bags.size(); ++b) {
    if (!full.bags[b].label) continue;
    for (std::size_t i = 0; i < full.bags[b].n_valid; ++i) CHECK(full.witness[b][i] == 1);
  }
}
