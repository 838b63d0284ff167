#include "hit/embeddings.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include "json.hpp"

#include "hit/parallel.hpp"
#include "hit/rng.hpp"

namespace hit {

ImageTensor resize_bilinear(const RgbImage& image, int width, int height) {
  require(!image.empty(), Errc::EmptyImage, "cannot resize an empty image");
  require(width > 0 && height > 0, Errc::InvalidArgument, "target size must be positive");
  ImageTensor out{width, height, std::vector<float>(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3)};
  const double sx = static_cast<double>(image.width()) / width;
  const double sy = static_cast<double>(image.height()) / height;
  const int max_x = image.width() - 1;
  const int max_y = image.height() - 1;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(max_y));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, max_y);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(max_x));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, max_x);
      const double wx = fx - x0;
      const auto* p00 = image.pixel(x0, y0);
      const auto* p10 = image.pixel(x1, y0);
      const auto* p01 = image.pixel(x0, y1);
      const auto* p11 = image.pixel(x1, y1);
      for (int c = 0; c < 3; ++c) {
        const double top = p00[c] * (1.0 - wx) + p10[c] * wx;
        const double bottom = p01[c] * (1.0 - wx) + p11[c] * wx;
        out.values[(static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) * 3 +
                   static_cast<std::size_t>(c)] = static_cast<float>((top * (1.0 - wy) + bottom * wy) / 255.0);
      }
    }
  }
  return out;
}

ImageTensor preprocess_crop(const RgbImage& crop, const ChannelNormalization& norm, int size) {
  require(!crop.empty(), Errc::EmptyImage, "cannot preprocess an empty crop");
  auto t = resize_bilinear(crop, size, size);
  for (std::size_t i = 0; i < t.values.size(); ++i) {
    const std::size_t c = i % 3;
    t.values[i] = static_cast<float>((t.values[i] - norm.mean[c]) / norm.stddev[c]);
  }
  return t;
}

namespace {

constexpr const char* kBaselineTag = "hit-baseline-v1";
constexpr const char* kRandProjTag = "hit-randproj-v1";
constexpr std::size_t kFeatureCount = kThumbnailFeatures + kHistogramFeatures + kMorphometricFeatures;

std::vector<double> handcrafted_features(const EncoderInput& input, const ChannelNormalization& norm) {
  const auto resized = resize_bilinear(input.crop, kEncoderInputSize, kEncoderInputSize);
  std::vector<double> f(kFeatureCount, 0.0);
  constexpr int kBlock = kEncoderInputSize / 8;
  // thumbnail of the normalised tensor
  for (int by = 0; by < 8; ++by) {
    for (int bx = 0; bx < 8; ++bx) {
      double s[3] = {0, 0, 0};
      for (int y = by * kBlock; y < (by + 1) * kBlock; ++y)
        for (int x = bx * kBlock; x < (bx + 1) * kBlock; ++x)
          for (int c = 0; c < 3; ++c) s[c] += resized.at(x, y, c);
      for (int c = 0; c < 3; ++c) {
        const double mean = s[c] / (kBlock * kBlock);
        f[static_cast<std::size_t>((by * 8 + bx) * 3 + c)] =
            (mean - norm.mean[static_cast<std::size_t>(c)]) / norm.stddev[static_cast<std::size_t>(c)];
      }
    }
  }
  // 32-bin per-channel histograms, normalised to unit mass
  const double n = static_cast<double>(kEncoderInputSize) * kEncoderInputSize;
  for (std::size_t i = 0; i < resized.values.size(); ++i) {
    const std::size_t c = i % 3;
    const int bin = std::min(31, static_cast<int>(resized.values[i] * 32.0f));
    f[kThumbnailFeatures + c * 32 + static_cast<std::size_t>(bin)] += 1.0 / n;
  }
  if (input.morphometrics) {
    const auto& m = *input.morphometrics;
    double* out = f.data() + kMorphometricOffset;
    out[0] = std::log1p(m.gland_area_px) / 10.0;
    out[1] = m.rel_lumen_area;
    out[2] = m.rel_epithelium_area;
    out[3] = m.rel_stroma_area;
    out[4] = m.nuclei_proportion;
    out[5] = m.epithelial_nuclei_density.value_or(0.0);
  }
  return f;
}

class BaselineEncoder final : public Encoder {
 public:
  explicit BaselineEncoder(ChannelNormalization norm) : norm_(norm) {}
  const std::string& tag() const noexcept override { return tag_; }
  std::vector<float> encode(const EncoderInput& input) const override {
    const auto f = handcrafted_features(input, norm_);
    std::vector<float> v(kEmbeddingDim, 0.0f);
    for (std::size_t i = 0; i < f.size(); ++i) v[i] = static_cast<float>(f[i]);
    return v;
  }

 private:
  std::string tag_ = kBaselineTag;
  ChannelNormalization norm_;
};

class RandomProjectionEncoder final : public Encoder {
 public:
  explicit RandomProjectionEncoder(ChannelNormalization norm)
      : norm_(norm), weights_(kEmbeddingDim, kFeatureCount) {
    Rng rng(stable_hash(tag_));
    const double scale = 1.0 / std::sqrt(static_cast<double>(kFeatureCount));
    for (auto& w : weights_.values()) w = rng.normal() * scale;
  }
  const std::string& tag() const noexcept override { return tag_; }
  std::vector<float> encode(const EncoderInput& input) const override {
    const auto f = handcrafted_features(input, norm_);
    std::vector<float> v(kEmbeddingDim);
    for (std::size_t r = 0; r < kEmbeddingDim; ++r) {
      double s = 0.0;
      const auto row = weights_.row(r);
      for (std::size_t i = 0; i < f.size(); ++i) s += row[i] * f[i];
      v[r] = static_cast<float>(s);
    }
    return v;
  }

 private:
  std::string tag_ = kRandProjTag;
  ChannelNormalization norm_;
  MatrixD weights_;
};

}  // namespace

std::unique_ptr<Encoder> make_encoder(const std::string& tag, const ChannelNormalization& norm) {
  if (tag == kBaselineTag) return std::make_unique<BaselineEncoder>(norm);
  if (tag == kRandProjTag) return std::make_unique<RandomProjectionEncoder>(norm);
  fail(Errc::UnknownEncoderTag, "unknown encoder tag '" + tag + "'");
}

std::vector<std::string> known_encoder_tags() { return {kBaselineTag, kRandProjTag}; }

void EmbeddingStore::validate() const {
  require(gland_ids.size() == size() && bboxes.size() == size(), Errc::ShapeMismatch,
          "embedding store metadata length differs from row count");
  for (float v : vectors.values()) {
    require(std::isfinite(v), Errc::NumericFailure, "embedding store contains non-finite values");
  }
}

EmbeddingStore encode_crops(const std::string& encoder_tag, const std::string& slide_id,
                            const std::vector<EncoderInput>& inputs,
                            const std::vector<int>& gland_ids,
                            const std::vector<BoundingBox>& bboxes, int threads,
                            const ChannelNormalization& norm) {
  require(gland_ids.size() == inputs.size() && bboxes.size() == inputs.size(),
          Errc::ShapeMismatch, "one gland id and bbox per crop required");
  const auto encoder = make_encoder(encoder_tag, norm);
  EmbeddingStore store;
  store.slide_id = slide_id;
  store.encoder_tag = encoder_tag;
  store.gland_ids = gland_ids;
  store.bboxes = bboxes;
  store.vectors = MatrixF(inputs.size(), encoder->dim());
  parallel_for(inputs.size(), threads, [&](std::size_t i) {
    require(!inputs[i].crop.empty(), Errc::EmptyImage, "empty crop");
    const auto v = encoder->encode(inputs[i]);
    std::copy(v.begin(), v.end(), store.vectors.row(i).begin());
  });
  store.validate();
  return store;
}

namespace {

using json = nlohmann::json;

std::uint32_t to_little(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
}

}  // namespace

void write_store(const std::filesystem::path& path, const EmbeddingStore& store) {
  store.validate();
  json h;
  h["slide_id"] = store.slide_id;
  h["dim"] = store.dim();
  h["n"] = store.size();
  h["encoder_tag"] = store.encoder_tag;
  h["gland_ids"] = store.gland_ids;
  json boxes = json::array();
  for (const auto& b : store.bboxes) boxes.push_back({b.x, b.y, b.w, b.h});
  h["bboxes"] = boxes;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::IoError, "cannot write '" + path.string() + "'");
  out << h.dump() << "\n";
  std::vector<std::uint32_t> raw(store.vectors.values().size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    raw[i] = to_little(std::bit_cast<std::uint32_t>(store.vectors.values()[i]));
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
  if (!out) fail(Errc::IoError, "failed writing '" + path.string() + "'");
}

EmbeddingStore read_store(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::IoError, "cannot open '" + path.string() + "'");
  std::string header;
  std::getline(in, header);
  EmbeddingStore store;
  std::size_t n = 0, dim = 0;
  try {
    auto h = json::parse(header);
    store.slide_id = h.at("slide_id").get<std::string>();
    store.encoder_tag = h.at("encoder_tag").get<std::string>();
    n = h.at("n").get<std::size_t>();
    dim = h.at("dim").get<std::size_t>();
    store.gland_ids = h.at("gland_ids").get<std::vector<int>>();
    for (const auto& b : h.at("bboxes")) {
      store.bboxes.push_back({b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>(), b.at(3).get<int>()});
    }
  } catch (const json::exception& e) {
    fail(Errc::FormatError, "bad embedding store header in '" + path.string() + "': " + e.what());
  }
  std::vector<std::uint32_t> raw(n * dim);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
  if (static_cast<std::size_t>(in.gcount()) != raw.size() * 4) {
    fail(Errc::FormatError, "embedding store '" + path.string() + "' is truncated");
  }
  std::vector<float> values(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) values[i] = std::bit_cast<float>(to_little(raw[i]));
  store.vectors = MatrixF(n, dim, std::move(values));
  store.validate();
  return store;
}

std::uint64_t stable_hash(std::string_view text) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::vector<EmbeddingBag> assemble_bags(const std::vector<EmbeddingStore>& stores,
                                        const LabelTable& table, LabelKind kind,
                                        std::size_t max_instances, std::uint64_t seed,
                                        std::vector<std::string>* warnings) {
  require(max_instances >= 1, Errc::InvalidArgument, "max_instances must be >= 1");
  std::vector<EmbeddingBag> bags;
  bags.reserve(stores.size());
  for (const auto& store : stores) {
    const auto case_id = table.case_for_slide(store.slide_id);
    if (!case_id) fail(Errc::UnlabeledSlide, "slide '" + store.slide_id + "' has no labelled case");
    const auto label = case_label(table, *case_id, kind, warnings);
    if (!label) {
      fail(Errc::UnlabeledSlide, "slide '" + store.slide_id + "' has unknown " +
                                     std::string(label_kind_name(kind)) + " label");
    }
    EmbeddingBag bag;
    bag.case_id = *case_id;
    bag.slide_id = store.slide_id;
    bag.label = *label;
    bag.instances = MatrixF(max_instances, store.dim(), 0.0f);
    bag.valid.assign(max_instances, 0);
    bag.gland_ids.assign(max_instances, -1);
    Rng rng(derive_seed(seed, stable_hash(store.slide_id)));
    const auto rows = rng.sample_without_replacement(store.size(), max_instances);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto src = store.vectors.row(rows[r]);
      std::copy(src.begin(), src.end(), bag.instances.row(r).begin());
      bag.valid[r] = 1;
      bag.gland_ids[r] = store.gland_ids[rows[r]];
    }
    bag.n_valid = rows.size();
    bags.push_back(std::move(bag));
  }
  return bags;
}

std::vector<GridTile> grid_tiles(const SlideRaster& slide, int tile_px, double min_tissue,
                                 const StainHeuristicParams& params) {
  require(tile_px >= 1, Errc::InvalidArgument, "tile size must be >= 1");
  std::vector<GridTile> out;
  const auto& img = slide.image();
  for (int y = 0; y + tile_px <= img.height(); y += tile_px) {
    for (int x = 0; x + tile_px <= img.width(); x += tile_px) {
      std::size_t tissue = 0;
      for (int yy = y; yy < y + tile_px; ++yy) {
        for (int xx = x; xx < x + tile_px; ++xx) {
          const auto* p = img.pixel(xx, yy);
          tissue += deconvolve_he(p[0], p[1], p[2]).total_od > params.tissue_od ? 1 : 0;
        }
      }
      const double frac = static_cast<double>(tissue) / (static_cast<double>(tile_px) * tile_px);
      if (frac >= min_tissue) out.push_back({{x, y, tile_px, tile_px}, img.crop(x, y, tile_px, tile_px), frac});
    }
  }
  return out;
}

}  // namespace hit
