#include "hit/gland_extraction.hpp"

#include <algorithm>
#include <numeric>
#include "json.hpp"
#include <sstream>

#include "hit/image_io.hpp"
#include "hit/parallel.hpp"

namespace hit {

namespace {

class DisjointSet {
 public:
  std::int32_t make() {
    parent_.push_back(static_cast<std::int32_t>(parent_.size()));
    return parent_.back();
  }
  std::int32_t find(std::int32_t x) {
    while (parent_[static_cast<std::size_t>(x)] != x) {
      auto& p = parent_[static_cast<std::size_t>(x)];
      p = parent_[static_cast<std::size_t>(p)];
      x = p;
    }
    return x;
  }
  void unite(std::int32_t a, std::int32_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    // smaller root wins so representatives stay in raster order
    if (a < b) parent_[static_cast<std::size_t>(b)] = a;
    else parent_[static_cast<std::size_t>(a)] = b;
  }
  std::size_t size() const { return parent_.size(); }

 private:
  std::vector<std::int32_t> parent_;
};

}  // namespace

LabeledPlane connected_components(const BinaryPlane& mask, int connectivity) {
  require(connectivity == 4 || connectivity == 8, Errc::InvalidArgument,
          "connectivity must be 4 or 8");
  const int w = mask.width();
  const int h = mask.height();
  LabeledPlane out{Plane<std::int32_t>(w, h, 0), 0};
  auto& lab = out.labels;
  DisjointSet sets;
  sets.make();  // provisional label 0 = background

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!mask.at(x, y)) continue;
      std::int32_t neighbours[4];
      int n = 0;
      if (x > 0 && lab.at(x - 1, y)) neighbours[n++] = lab.at(x - 1, y);
      if (y > 0) {
        if (lab.at(x, y - 1)) neighbours[n++] = lab.at(x, y - 1);
        if (connectivity == 8) {
          if (x > 0 && lab.at(x - 1, y - 1)) neighbours[n++] = lab.at(x - 1, y - 1);
          if (x + 1 < w && lab.at(x + 1, y - 1)) neighbours[n++] = lab.at(x + 1, y - 1);
        }
      }
      if (n == 0) {
        lab.at(x, y) = sets.make();
        continue;
      }
      std::int32_t m = *std::min_element(neighbours, neighbours + n);
      lab.at(x, y) = m;
      for (int i = 0; i < n; ++i) sets.unite(m, neighbours[i]);
    }
  }

  std::vector<std::int32_t> final_label(sets.size(), 0);
  std::int32_t next = 0;
  for (std::size_t i = 1; i < sets.size(); ++i) {
    const auto root = sets.find(static_cast<std::int32_t>(i));
    if (root == static_cast<std::int32_t>(i)) final_label[i] = ++next;
  }
  for (std::size_t i = 1; i < sets.size(); ++i) {
    final_label[i] = final_label[static_cast<std::size_t>(sets.find(static_cast<std::int32_t>(i)))];
  }
  for (auto& v : lab.values()) v = final_label[static_cast<std::size_t>(v)];
  out.count = next;
  return out;
}

std::vector<GlandInstance> extract_instances(const CompartmentMaskSet& masks,
                                             const SlideRaster& slide,
                                             const ExtractionOptions& options,
                                             const BinaryPlane* nuclei) {
  const int d = masks.downsample;
  require(d >= 1, Errc::InvalidArgument, "downsample factor must be >= 1");
  require(masks.width() == downsampled_extent(slide.width_px(), d) &&
              masks.height() == downsampled_extent(slide.height_px(), d),
          Errc::ShapeMismatch, "mask dimensions disagree with slide under the downsample factor");
  require(options.min_area_px >= 0 && options.margin_px >= 0, Errc::InvalidArgument,
          "min_area_px and margin_px must be >= 0");
  if (nuclei) {
    require(nuclei->same_shape(masks.gland), Errc::ShapeMismatch,
            "nuclei mask differs in size from compartment masks");
  }
  const auto epi = masks.plane_or_empty(TissueClass::Epithelium);
  const auto lum = masks.plane_or_empty(TissueClass::Lumen);

  const auto labeled = connected_components(masks.gland, options.connectivity);
  const int n = labeled.count;
  const int W = masks.width();
  const int H = masks.height();

  std::vector<BoundingBox> box(static_cast<std::size_t>(n + 1), BoundingBox{W, H, -1, -1});
  std::vector<std::size_t> area(static_cast<std::size_t>(n + 1), 0);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const auto l = static_cast<std::size_t>(labeled.labels.at(x, y));
      if (!l) continue;
      auto& b = box[l];
      b.x = std::min(b.x, x);
      b.y = std::min(b.y, y);
      b.w = std::max(b.w, x);  // max x until finalised
      b.h = std::max(b.h, y);
      ++area[l];
    }
  }

  std::vector<int> kept;
  for (int l = 1; l <= n; ++l) {
    const double level0_area = static_cast<double>(area[static_cast<std::size_t>(l)]) * d * d;
    if (level0_area >= options.min_area_px) kept.push_back(l);
  }

  const int margin = (options.margin_px + d - 1) / d;
  std::vector<GlandInstance> out(kept.size());
  parallel_for(kept.size(), options.threads, [&](std::size_t k) {
    const int l = kept[k];
    const auto& t = box[static_cast<std::size_t>(l)];
    const BoundingBox tight{t.x, t.y, t.w - t.x + 1, t.h - t.y + 1};
    const int x0 = std::max(0, tight.x - margin);
    const int y0 = std::max(0, tight.y - margin);
    const int x1 = std::min(W, tight.x + tight.w + margin);
    const int y1 = std::min(H, tight.y + tight.h + margin);
    GlandInstance g;
    g.gland_id = static_cast<int>(k) + 1;
    g.slide_id = slide.slide_id();
    g.downsample = d;
    g.mask_bbox = {x0, y0, x1 - x0, y1 - y0};
    auto to_level0 = [&](int bx, int by, int bw, int bh) {
      const int lx = bx * d;
      const int ly = by * d;
      return BoundingBox{lx, ly, std::min(slide.width_px(), (bx + bw) * d) - lx,
                         std::min(slide.height_px(), (by + bh) * d) - ly};
    };
    g.bbox = to_level0(x0, y0, x1 - x0, y1 - y0);
    g.tight_bbox = to_level0(tight.x, tight.y, tight.w, tight.h);
    const int cw = x1 - x0;
    const int ch = y1 - y0;
    g.component = BinaryPlane(cw, ch, 0);
    g.epithelium = BinaryPlane(cw, ch, 0);
    g.lumen = BinaryPlane(cw, ch, 0);
    g.nuclei = BinaryPlane(cw, ch, 0);
    g.crop = RgbImage(cw, ch, 0);
    for (int y = 0; y < ch; ++y) {
      for (int x = 0; x < cw; ++x) {
        const int sx = x0 + x;
        const int sy = y0 + y;
        if (labeled.labels.at(sx, sy) != l) continue;
        g.component.at(x, y) = 1;
        ++g.area_px;
        const bool is_lumen = lum.at(sx, sy) != 0;
        const bool is_epi = !is_lumen && epi.at(sx, sy) != 0;
        const bool is_nuc = nuclei && nuclei->at(sx, sy);
        g.lumen.at(x, y) = is_lumen;
        g.epithelium.at(x, y) = is_epi;
        g.nuclei.at(x, y) = is_nuc;
        const std::uint8_t* c = is_nuc ? kCropNuclei : is_lumen ? kCropLumen : is_epi ? kCropEpithelium : kCropBackground;
        g.crop.set(x, y, c[0], c[1], c[2]);
      }
    }
    out[k] = std::move(g);
  });
  return out;
}

RgbImage raw_crop(const SlideRaster& slide, const GlandInstance& instance) {
  const auto& b = instance.bbox;
  return slide.image().crop(b.x, b.y, b.w, b.h);
}

MorphometricRecord morphometrics(const GlandInstance& g) {
  require(g.area_px > 0, Errc::InvalidArgument, "gland instance has an empty component");
  const double area = static_cast<double>(g.area_px);
  const double crop_px = static_cast<double>(g.component.size());
  const double lumen = static_cast<double>(population(g.lumen));
  const double epi = static_cast<double>(population(g.epithelium));
  const double nuc = static_cast<double>(population(g.nuclei));
  std::size_t nuc_epi = 0;
  for (std::size_t i = 0; i < g.nuclei.size(); ++i) {
    nuc_epi += (g.nuclei.values()[i] && g.epithelium.values()[i]) ? 1 : 0;
  }
  MorphometricRecord r;
  r.gland_area_px = area * g.downsample * g.downsample;
  r.rel_lumen_area = lumen / area;
  r.rel_epithelium_area = epi / area;
  r.rel_stroma_area = (crop_px - area) / crop_px;
  r.nuclei_proportion = nuc / crop_px;
  if (epi > 0) r.epithelial_nuclei_density = static_cast<double>(nuc_epi) / epi;
  return r;
}

namespace {

using json = nlohmann::json;

json box_json(const BoundingBox& b) { return json::array({b.x, b.y, b.w, b.h}); }

BoundingBox box_from(const json& j) {
  return {j.at(0).get<int>(), j.at(1).get<int>(), j.at(2).get<int>(), j.at(3).get<int>()};
}

}  // namespace

void export_instances(const std::filesystem::path& out_dir, const std::string& slide_id,
                      const std::vector<GlandInstance>& instances) {
  const auto dir = out_dir / slide_id;
  std::filesystem::create_directories(dir);
  std::ostringstream manifest;
  for (const auto& g : instances) {
    const auto crop_name = std::to_string(g.gland_id) + ".png";
    const auto mask_name = std::to_string(g.gland_id) + "_mask.png";
    io::write_png_rgb(dir / crop_name, g.crop);
    io::write_png_mask(dir / mask_name, g.component);
    const auto m = morphometrics(g);
    json j;
    j["slide_id"] = g.slide_id;
    j["gland_id"] = g.gland_id;
    j["downsample"] = g.downsample;
    j["bbox"] = box_json(g.bbox);
    j["tight_bbox"] = box_json(g.tight_bbox);
    j["mask_bbox"] = box_json(g.mask_bbox);
    j["area_px"] = g.area_px;
    j["morphometrics"] = {
        {"gland_area_px", m.gland_area_px},
        {"rel_lumen_area", m.rel_lumen_area},
        {"rel_epithelium_area", m.rel_epithelium_area},
        {"rel_stroma_area", m.rel_stroma_area},
        {"nuclei_proportion", m.nuclei_proportion},
        {"epithelial_nuclei_density",
         m.epithelial_nuclei_density ? json(*m.epithelial_nuclei_density) : json(nullptr)}};
    j["crop"] = crop_name;
    j["mask"] = mask_name;
    manifest << j.dump() << "\n";
  }
  io::write_text(dir / "manifest.jsonl", manifest.str());
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& slide_dir) {
  std::istringstream in(io::read_text(slide_dir / "manifest.jsonl"));
  std::vector<ManifestEntry> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      auto j = json::parse(line);
      ManifestEntry e;
      e.slide_id = j.at("slide_id").get<std::string>();
      e.gland_id = j.at("gland_id").get<int>();
      e.downsample = j.at("downsample").get<int>();
      e.bbox = box_from(j.at("bbox"));
      e.tight_bbox = box_from(j.at("tight_bbox"));
      e.mask_bbox = box_from(j.at("mask_bbox"));
      e.area_px = j.at("area_px").get<std::size_t>();
      const auto& m = j.at("morphometrics");
      e.morphometrics.gland_area_px = m.at("gland_area_px").get<double>();
      e.morphometrics.rel_lumen_area = m.at("rel_lumen_area").get<double>();
      e.morphometrics.rel_epithelium_area = m.at("rel_epithelium_area").get<double>();
      e.morphometrics.rel_stroma_area = m.at("rel_stroma_area").get<double>();
      e.morphometrics.nuclei_proportion = m.at("nuclei_proportion").get<double>();
      if (!m.at("epithelial_nuclei_density").is_null()) {
        e.morphometrics.epithelial_nuclei_density = m.at("epithelial_nuclei_density").get<double>();
      }
      e.crop_file = j.at("crop").get<std::string>();
      e.mask_file = j.at("mask").get<std::string>();
      out.push_back(std::move(e));
    } catch (const json::exception& ex) {
      fail(Errc::FormatError, "bad manifest line in '" + slide_dir.string() + "': " + ex.what());
    }
  }
  return out;
}

}  // namespace hit
