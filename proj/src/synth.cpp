#include "hit/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "hit/rng.hpp"

namespace hit::synth {

double SynthGland::gland_area() const noexcept { return std::numbers::pi * outer_a * outer_b; }
double SynthGland::lumen_area() const noexcept { return std::numbers::pi * inner_a * inner_b; }
double SynthGland::epithelium_area() const noexcept { return gland_area() - lumen_area(); }

namespace {

// Squared normalised radius of a point relative to a rotated ellipse.
double ellipse_r2(double dx, double dy, double cos_t, double sin_t, double a, double b) {
  const double u = (dx * cos_t + dy * sin_t) / a;
  const double v = (-dx * sin_t + dy * cos_t) / b;
  return u * u + v * v;
}

std::uint8_t jitter(std::uint8_t base, double sd, Rng& rng) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(base + sd * rng.normal(), 0.0, 255.0)));
}

struct NucleusDisk {
  double x, y, r;
};

}  // namespace

SynthSlide synth_slide(std::uint64_t seed, const SlideOptions& o) {
  require(o.width > 0 && o.height > 0, Errc::InvalidArgument, "slide size must be positive");
  require(o.n_glands >= 0, Errc::InvalidArgument, "gland count must be >= 0");
  require(o.min_outer_radius > 10 && o.max_outer_radius >= o.min_outer_radius, Errc::InvalidArgument,
          "invalid gland radius range");
  Rng rng(derive_seed(seed, 0));

  std::vector<SynthGland> glands;
  int attempts = 0;
  while (static_cast<int>(glands.size()) < o.n_glands) {
    if (++attempts > o.max_attempts) {
      fail(Errc::PlacementFailure, "placed " + std::to_string(glands.size()) + " of " +
                                       std::to_string(o.n_glands) + " glands after " +
                                       std::to_string(o.max_attempts) + " attempts");
    }
    SynthGland g;
    g.outer_a = rng.uniform(o.min_outer_radius, o.max_outer_radius);
    g.outer_b = g.outer_a * rng.uniform(0.6, 1.0);
    g.angle = rng.uniform(0.0, std::numbers::pi);
    g.atypical = rng.uniform() < o.atypical_fraction;
    const double inner = g.atypical ? rng.uniform(0.15, 0.25) : rng.uniform(0.45, 0.65);
    g.inner_a = g.outer_a * inner;
    g.inner_b = g.outer_b * inner;
    const double reach = g.outer_a + o.gap_px;
    if (2 * reach >= o.width || 2 * reach >= o.height) continue;
    g.cx = rng.uniform(reach, o.width - reach);
    g.cy = rng.uniform(reach, o.height - reach);
    bool clear = true;
    for (const auto& other : glands) {
      const double need = g.outer_a + other.outer_a + o.gap_px;
      if (std::hypot(g.cx - other.cx, g.cy - other.cy) < need) {
        clear = false;
        break;
      }
    }
    if (clear) glands.push_back(g);
  }

  // Nuclei sit on the midline of each epithelial ring.
  std::vector<std::vector<NucleusDisk>> nuclei(glands.size());
  for (std::size_t i = 0; i < glands.size(); ++i) {
    const auto& g = glands[i];
    const double mid = 0.5 * (1.0 + g.inner_a / g.outer_a);
    const double spacing = g.atypical ? 11.0 : 20.0;
    const double perimeter = std::numbers::pi * (g.outer_a + g.outer_b) * mid;
    const int count = std::max(4, static_cast<int>(perimeter / spacing));
    const double phase = rng.uniform(0.0, 2 * std::numbers::pi);
    for (int k = 0; k < count; ++k) {
      const double t = phase + 2 * std::numbers::pi * k / count;
      const double u = mid * g.outer_a * std::cos(t);
      const double v = mid * g.outer_b * std::sin(t);
      nuclei[i].push_back({g.cx + u * std::cos(g.angle) - v * std::sin(g.angle),
                           g.cy + u * std::sin(g.angle) + v * std::cos(g.angle), rng.uniform(3.0, 4.5)});
    }
  }

  RgbImage image(o.width, o.height);
  BinaryPlane epi(o.width, o.height, 0), lumen(o.width, o.height, 0), stroma(o.width, o.height, 1);
  BinaryPlane nuc(o.width, o.height, 0);
  const std::uint64_t pixel_seed = derive_seed(seed, 1);
  for (int y = 0; y < o.height; ++y) {
    Rng row_rng(derive_seed(pixel_seed, static_cast<std::uint64_t>(y)));
    for (int x = 0; x < o.width; ++x) {
      image.set(x, y, jitter(kStroma[0], 10, row_rng), jitter(kStroma[1], 10, row_rng),
                jitter(kStroma[2], 10, row_rng));
    }
  }
  Rng paint_rng(derive_seed(seed, 2));
  for (std::size_t i = 0; i < glands.size(); ++i) {
    const auto& g = glands[i];
    const double c = std::cos(g.angle), s = std::sin(g.angle);
    const int x0 = std::max(0, static_cast<int>(std::floor(g.cx - g.outer_a - 1)));
    const int x1 = std::min(o.width - 1, static_cast<int>(std::ceil(g.cx + g.outer_a + 1)));
    const int y0 = std::max(0, static_cast<int>(std::floor(g.cy - g.outer_a - 1)));
    const int y1 = std::min(o.height - 1, static_cast<int>(std::ceil(g.cy + g.outer_a + 1)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double dx = x + 0.5 - g.cx, dy = y + 0.5 - g.cy;
        if (ellipse_r2(dx, dy, c, s, g.outer_a, g.outer_b) > 1.0) continue;
        stroma.at(x, y) = 0;
        if (ellipse_r2(dx, dy, c, s, g.inner_a, g.inner_b) <= 1.0) {
          lumen.at(x, y) = 1;
          image.set(x, y, jitter(kLumen[0], 4, paint_rng), jitter(kLumen[1], 4, paint_rng),
                    jitter(kLumen[2], 4, paint_rng));
          continue;
        }
        epi.at(x, y) = 1;
        bool in_nucleus = false;
        for (const auto& n : nuclei[i]) {
          if (std::hypot(x + 0.5 - n.x, y + 0.5 - n.y) <= n.r) {
            in_nucleus = true;
            break;
          }
        }
        if (in_nucleus) {
          nuc.at(x, y) = 1;
          image.set(x, y, jitter(kNuclei[0], 6, paint_rng), jitter(kNuclei[1], 6, paint_rng),
                    jitter(kNuclei[2], 6, paint_rng));
        } else {
          image.set(x, y, jitter(kEpithelium[0], 8, paint_rng), jitter(kEpithelium[1], 8, paint_rng),
                    jitter(kEpithelium[2], 8, paint_rng));
        }
      }
    }
  }

  CompartmentMaskSet truth;
  truth.classes = {TissueClass::StromaBackground, TissueClass::Epithelium, TissueClass::Lumen};
  truth.gland = BinaryPlane(o.width, o.height, 0);
  for (std::size_t i = 0; i < truth.gland.size(); ++i) {
    truth.gland.values()[i] = epi.values()[i] | lumen.values()[i];
  }
  truth.planes = {std::move(stroma), std::move(epi), std::move(lumen)};
  truth.downsample = 1;
  return {SlideRaster(o.slide_id, std::move(image)), std::move(truth), std::move(nuc), std::move(glands)};
}

Cohort synth_cohort(std::uint64_t seed, const CohortOptions& options) {
  require(options.n_cases >= 1, Errc::InvalidArgument, "cohort needs at least one case");
  Cohort cohort;
  std::vector<int> labels(static_cast<std::size_t>(options.n_cases));
  for (int i = 0; i < options.n_cases; ++i) labels[static_cast<std::size_t>(i)] = i % 2;
  Rng rng(derive_seed(seed, 10));
  rng.shuffle(labels);
  for (int i = 0; i < options.n_cases; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "case%03d", i);
    auto slide_options = options.slide;
    slide_options.slide_id = std::string(id) + "-01";
    const int label = labels[static_cast<std::size_t>(i)];
    slide_options.atypical_fraction = label ? options.positive_atypical_fraction : 0.0;
    cohort.slides.push_back(synth_slide(derive_seed(seed, 100 + static_cast<std::uint64_t>(i)), slide_options));
    CaseLabels c;
    c.case_id = id;
    c.bcr = label;
    for (auto& g : c.gains) g = 0;
    c.gains[static_cast<std::size_t>(Gene::ZEB1)] = label;
    c.gains[static_cast<std::size_t>(Gene::MYC)] = label;
    cohort.labels.add(std::move(c));
  }
  return cohort;
}

SynthBags synth_bags(std::uint64_t seed, const BagOptions& o) {
  require(o.n_bags >= 2 && o.dim >= 1, Errc::InvalidArgument, "need >= 2 bags and dim >= 1");
  require(o.witness_rate > 0.0 && o.witness_rate <= 1.0, Errc::InvalidArgument,
          "witness_rate must lie in (0, 1]");
  require(o.min_instances >= 1 && o.max_instances >= o.min_instances, Errc::InvalidArgument,
          "invalid bag size range");
  Rng rng(derive_seed(seed, 0));
  const auto dim = static_cast<std::size_t>(o.dim);
  SynthBags out;
  out.witness_direction.resize(dim);
  double norm = 0.0;
  for (auto& v : out.witness_direction) {
    v = rng.normal();
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (auto& v : out.witness_direction) v /= norm;

  std::vector<int> labels(static_cast<std::size_t>(o.n_bags));
  for (int i = 0; i < o.n_bags; ++i) labels[static_cast<std::size_t>(i)] = i < o.n_bags / 2 ? 1 : 0;
  rng.shuffle(labels);

  const auto capacity = static_cast<std::size_t>(o.max_instances);
  for (int b = 0; b < o.n_bags; ++b) {
    Rng bag_rng(derive_seed(seed, 1000 + static_cast<std::uint64_t>(b)));
    const auto n = static_cast<std::size_t>(o.min_instances) +
                   bag_rng.below(static_cast<std::uint64_t>(o.max_instances - o.min_instances + 1));
    EmbeddingBag bag;
    char id[32];
    std::snprintf(id, sizeof id, "bag%04d", b);
    bag.case_id = id;
    bag.slide_id = id;
    bag.label = labels[static_cast<std::size_t>(b)];
    bag.instances = MatrixF(capacity, dim, 0.0f);
    bag.valid.assign(capacity, 0);
    bag.gland_ids.assign(capacity, -1);
    std::vector<std::uint8_t> witness(capacity, 0);
    if (bag.label == 1) {
      for (std::size_t i = 0; i < n; ++i) witness[i] = bag_rng.uniform() < o.witness_rate ? 1 : 0;
      if (std::none_of(witness.begin(), witness.begin() + static_cast<std::ptrdiff_t>(n),
                       [](std::uint8_t w) { return w != 0; })) {
        witness[bag_rng.below(n)] = 1;
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      auto row = bag.instances.row(i);
      for (std::size_t j = 0; j < dim; ++j) {
        const double shift = witness[i] ? o.separation * out.witness_direction[j] : 0.0;
        row[j] = static_cast<float>(shift + bag_rng.normal());
      }
      bag.valid[i] = 1;
      bag.gland_ids[i] = static_cast<int>(i);
    }
    bag.n_valid = n;
    out.bags.push_back(std::move(bag));
    out.witness.push_back(std::move(witness));
  }
  return out;
}

}  // namespace hit::synth
