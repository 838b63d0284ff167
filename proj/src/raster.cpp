#include "hit/raster.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "hit/parallel.hpp"
#include "hit/simd.hpp"

namespace hit {

std::size_t population(const BinaryPlane& plane) {
  std::size_t n = 0;
  for (auto v : plane.values()) n += v ? 1 : 0;
  return n;
}

RgbImage::RgbImage(int width, int height, std::uint8_t fill)
    : width_(width), height_(height),
      pixels_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3, fill) {
  require(width >= 0 && height >= 0, Errc::InvalidArgument, "negative image size");
}

RgbImage::RgbImage(int width, int height, std::vector<std::uint8_t> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
  require(width >= 0 && height >= 0, Errc::InvalidArgument, "negative image size");
  require(pixels_.size() == static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3,
          Errc::ShapeMismatch, "RGB buffer length must be width*height*3");
}

RgbImage RgbImage::crop(int x, int y, int w, int h) const {
  require(x >= 0 && y >= 0 && w >= 0 && h >= 0 && x + w <= width_ && y + h <= height_,
          Errc::InvalidArgument, "crop outside image");
  RgbImage out(w, h);
  for (int r = 0; r < h; ++r) {
    std::copy_n(pixel(x, y + r), static_cast<std::size_t>(w) * 3, out.pixel(0, r));
  }
  return out;
}

SlideRaster::SlideRaster(std::string slide_id, RgbImage image,
                         std::optional<double> microns_per_pixel)
    : slide_id_(std::move(slide_id)), image_(std::move(image)),
      microns_per_pixel_(microns_per_pixel) {
  require(image_.width() >= 1 && image_.height() >= 1, Errc::EmptyImage,
          "slide must be at least 1x1 pixels");
  if (microns_per_pixel_) {
    require(*microns_per_pixel_ > 0.0, Errc::InvalidArgument, "microns_per_pixel must be > 0");
  }
}

std::string_view class_name(TissueClass c) noexcept {
  switch (c) {
    case TissueClass::StromaBackground: return "stroma_background";
    case TissueClass::Epithelium: return "epithelium";
    case TissueClass::Lumen: return "lumen";
    case TissueClass::Nuclei: return "nuclei";
  }
  return "unknown";
}

TissueClass parse_class(std::string_view name) {
  for (auto c : {TissueClass::StromaBackground, TissueClass::Epithelium, TissueClass::Lumen,
                 TissueClass::Nuclei}) {
    if (class_name(c) == name) return c;
  }
  fail(Errc::FormatError, "unknown tissue class '" + std::string(name) + "'");
}

ClassProbabilityMap::ClassProbabilityMap(std::vector<TissueClass> classes, int downsample,
                                         int width, int height, float fill)
    : classes_(std::move(classes)), downsample_(downsample), width_(width), height_(height) {
  require(!classes_.empty(), Errc::InvalidArgument, "probability map needs at least one class");
  require(downsample_ >= 1, Errc::InvalidArgument, "downsample factor must be >= 1");
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    for (std::size_t j = i + 1; j < classes_.size(); ++j) {
      require(classes_[i] != classes_[j], Errc::InvalidArgument, "duplicate class in map");
    }
  }
  planes_.assign(classes_.size(), ProbPlane(width, height, fill));
}

bool ClassProbabilityMap::has(TissueClass c) const noexcept {
  return std::find(classes_.begin(), classes_.end(), c) != classes_.end();
}

std::size_t ClassProbabilityMap::index_of(TissueClass c) const {
  auto it = std::find(classes_.begin(), classes_.end(), c);
  require(it != classes_.end(), Errc::ShapeMismatch,
          "class '" + std::string(class_name(c)) + "' not in map");
  return static_cast<std::size_t>(it - classes_.begin());
}

bool ClassProbabilityMap::same_layout(const ClassProbabilityMap& other) const noexcept {
  return classes_ == other.classes_ && downsample_ == other.downsample_ &&
         width_ == other.width_ && height_ == other.height_;
}

double ClassProbabilityMap::max_simplex_error() const {
  double worst = 0.0;
  const std::size_t n = static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (const auto& p : planes_) s += p.values()[i];
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

bool CompartmentMaskSet::has(TissueClass c) const noexcept {
  return std::find(classes.begin(), classes.end(), c) != classes.end();
}

BinaryPlane CompartmentMaskSet::plane_or_empty(TissueClass c) const {
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] == c) return planes[i];
  }
  return BinaryPlane(gland.width(), gland.height(), 0);
}

int downsampled_extent(int extent, int downsample) noexcept {
  return (extent + downsample - 1) / downsample;
}

namespace {

std::vector<int> axis_origins(int extent, int patch, int stride) {
  std::vector<int> out;
  const int last = extent - patch;
  for (int o = 0; o < last; o += stride) out.push_back(o);
  out.push_back(last);
  return out;
}

void check_downsample(int d) {
  require(d == 1 || d == 2 || d == 4, Errc::InvalidArgument,
          "downsample factor must be 1, 2 or 4");
}

}  // namespace

PatchGrid plan_patch_grid(int width_px, int height_px, int patch_size_px, int stride_px) {
  require(patch_size_px >= 1, Errc::InvalidArgument, "patch size must be >= 1");
  require(stride_px >= 1 && stride_px <= patch_size_px, Errc::InvalidArgument,
          "stride must be in [1, patch size]");
  if (width_px < patch_size_px || height_px < patch_size_px) {
    fail(Errc::SlideSmallerThanPatch,
         "slide " + std::to_string(width_px) + "x" + std::to_string(height_px) +
             " is smaller than patch size " + std::to_string(patch_size_px));
  }
  PatchGrid grid;
  grid.slide_width = width_px;
  grid.slide_height = height_px;
  grid.patch_size = patch_size_px;
  grid.stride = stride_px;
  grid.xs = axis_origins(width_px, patch_size_px, stride_px);
  grid.ys = axis_origins(height_px, patch_size_px, stride_px);
  for (int y : grid.ys) {
    for (int x : grid.xs) grid.origins.push_back({x, y});
  }
  return grid;
}

ClassProbabilityMap stitch_predictions(const PatchGrid& grid,
                                       std::span<const PatchPrediction> predictions,
                                       int downsample_factor, int threads) {
  check_downsample(downsample_factor);
  require(!grid.origins.empty(), Errc::InvalidArgument, "empty patch grid");

  std::map<PatchOrigin, const ClassProbabilityMap*> by_origin;
  for (const auto& p : predictions) by_origin[p.origin] = &p.map;

  const int P = grid.patch_size;
  const ClassProbabilityMap* first = nullptr;
  std::vector<const ClassProbabilityMap*> ordered;
  ordered.reserve(grid.origins.size());
  for (const auto& o : grid.origins) {
    auto it = by_origin.find(o);
    if (it == by_origin.end()) {
      fail(Errc::MissingPatch,
           "no prediction for patch at (" + std::to_string(o.x) + "," + std::to_string(o.y) + ")");
    }
    const auto* m = it->second;
    if (!first) first = m;
    require(m->classes() == first->classes(), Errc::ShapeMismatch,
            "patch predictions have inconsistent class lists");
    require(m->downsample() == 1 && m->width() == P && m->height() == P, Errc::ShapeMismatch,
            "patch prediction must be full-resolution patch_size x patch_size");
    ordered.push_back(m);
  }

  const int W = grid.slide_width;
  const int H = grid.slide_height;
  const int d = downsample_factor;
  const std::size_t n_classes = first->classes().size();

  // coverage factorises over the two axes of the grid
  std::vector<int> cover_x(static_cast<std::size_t>(W), 0);
  std::vector<int> cover_y(static_cast<std::size_t>(H), 0);
  for (int x0 : grid.xs) for (int x = x0; x < x0 + P; ++x) ++cover_x[static_cast<std::size_t>(x)];
  for (int y0 : grid.ys) for (int y = y0; y < y0 + P; ++y) ++cover_y[static_cast<std::size_t>(y)];

  const int out_w = downsampled_extent(W, d);
  const int out_h = downsampled_extent(H, d);
  ClassProbabilityMap out(first->classes(), d, out_w, out_h);
  const auto& kernels = simd::active();
  const std::size_t nx = grid.xs.size();

  parallel_for(static_cast<std::size_t>(out_h), threads, [&](std::size_t oy_index) {
    const int oy = static_cast<int>(oy_index);
    const int y_begin = oy * d;
    const int y_end = std::min(H, y_begin + d);
    std::vector<double> acc(static_cast<std::size_t>(W));
    std::vector<double> pooled(static_cast<std::size_t>(out_w));
    for (std::size_t c = 0; c < n_classes; ++c) {
      std::fill(pooled.begin(), pooled.end(), 0.0);
      for (int y = y_begin; y < y_end; ++y) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t gy = 0; gy < grid.ys.size(); ++gy) {
          const int y0 = grid.ys[gy];
          if (y < y0 || y >= y0 + P) continue;
          for (std::size_t gx = 0; gx < nx; ++gx) {
            const auto* m = ordered[gy * nx + gx];
            kernels.accumulate_f32(m->plane(c).row(y - y0).data(), acc.data() + grid.xs[gx],
                                   static_cast<std::size_t>(P));
          }
        }
        const double cy = cover_y[static_cast<std::size_t>(y)];
        for (int x = 0; x < W; ++x) {
          const double mean = acc[static_cast<std::size_t>(x)] / (cy * cover_x[static_cast<std::size_t>(x)]);
          pooled[static_cast<std::size_t>(x / d)] += mean;
        }
      }
      auto row = out.plane(c).row(oy);
      const int bh = y_end - y_begin;
      for (int ox = 0; ox < out_w; ++ox) {
        const int bw = std::min(W, (ox + 1) * d) - ox * d;
        row[static_cast<std::size_t>(ox)] =
            static_cast<float>(pooled[static_cast<std::size_t>(ox)] / (bw * bh));
      }
    }
  });
  return out;
}

ClassProbabilityMap pool_map(const ClassProbabilityMap& map, int downsample_factor) {
  check_downsample(downsample_factor);
  require(map.downsample() == 1, Errc::ShapeMismatch, "pool_map expects a full-resolution map");
  const int d = downsample_factor;
  const int W = map.width();
  const int H = map.height();
  const int out_w = downsampled_extent(W, d);
  const int out_h = downsampled_extent(H, d);
  ClassProbabilityMap out(map.classes(), d, out_w, out_h);
  for (std::size_t c = 0; c < map.classes().size(); ++c) {
    const auto& src = map.plane(c);
    auto& dst = out.plane(c);
    for (int oy = 0; oy < out_h; ++oy) {
      const int y_end = std::min(H, (oy + 1) * d);
      for (int ox = 0; ox < out_w; ++ox) {
        const int x_end = std::min(W, (ox + 1) * d);
        double s = 0.0;
        for (int y = oy * d; y < y_end; ++y)
          for (int x = ox * d; x < x_end; ++x) s += src.at(x, y);
        dst.at(ox, oy) = static_cast<float>(s / ((y_end - oy * d) * (x_end - ox * d)));
      }
    }
  }
  return out;
}

ClassProbabilityMap fuse_probabilities(const ClassProbabilityMap& a, const ClassProbabilityMap& b) {
  require(a.same_layout(b), Errc::ShapeMismatch,
          "fused maps must share classes, dimensions and downsample factor");
  ClassProbabilityMap out(a.classes(), a.downsample(), a.width(), a.height());
  for (std::size_t c = 0; c < a.classes().size(); ++c) {
    const auto& pa = a.plane(c).values();
    const auto& pb = b.plane(c).values();
    auto& po = out.plane(c).values();
    for (std::size_t i = 0; i < po.size(); ++i) po[i] = pa[i] * pb[i];
  }
  return out;
}

CompartmentMaskSet binarize(const ClassProbabilityMap& map, double threshold) {
  require(threshold > 0.0 && threshold < 1.0, Errc::InvalidArgument,
          "threshold must lie in (0, 1)");
  CompartmentMaskSet out;
  out.classes = map.classes();
  out.downsample = map.downsample();
  out.threshold = threshold;
  for (std::size_t c = 0; c < map.classes().size(); ++c) {
    BinaryPlane plane(map.width(), map.height(), 0);
    const auto& src = map.plane(c).values();
    auto& dst = plane.values();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > threshold ? 1 : 0;
    out.planes.push_back(std::move(plane));
  }
  out.gland = BinaryPlane(map.width(), map.height(), 0);
  for (auto c : {TissueClass::Epithelium, TissueClass::Lumen}) {
    if (!map.has(c)) continue;
    const auto& src = out.planes[map.index_of(c)].values();
    auto& dst = out.gland.values();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<std::uint8_t>(dst[i] | src[i]);
  }
  return out;
}

double dice_score(const BinaryPlane& pred, const BinaryPlane& truth) {
  require(pred.same_shape(truth), Errc::ShapeMismatch, "dice planes differ in shape");
  std::size_t a = 0, b = 0, both = 0;
  const auto& p = pred.values();
  const auto& t = truth.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool x = p[i] != 0;
    const bool y = t[i] != 0;
    a += x;
    b += y;
    both += (x && y);
  }
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(a + b);
}

}  // namespace hit
