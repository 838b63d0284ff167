#include "hit/image_io.hpp"

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>
#include "json.hpp"
#include <sstream>

namespace hit::io {
namespace {

using json = nlohmann::json;

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const fs::path& path, const char* mode) {
  FilePtr f(std::fopen(path.string().c_str(), mode));
  if (!f) fail(Errc::IoError, "cannot open '" + path.string() + "'");
  return f;
}

struct DecodedPng {
  int width = 0;
  int height = 0;
  int channels = 0;  // after expansion: 1 (gray) or 3 (rgb)
  int bit_depth = 8;  // 8 or 16
  std::vector<std::uint8_t> bytes;  // big-endian for 16-bit
};

enum class Want { Rgb8, Gray8, Gray16 };

struct HeaderInfo {
  png_uint_32 width;
  png_uint_32 height;
  std::size_t rowbytes;
  int channels;
  int bit_depth;
};

// The two functions below call setjmp and therefore hold only trivially
// destructible locals; the caller owns every buffer.
bool read_png_header(png_structp png, png_infop info, std::FILE* file, Want want, HeaderInfo* out) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_init_io(png, file);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
  const bool is_gray = (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA);
  if (want == Want::Rgb8) {
    if (depth == 16) png_set_strip_16(png);
    if (is_gray) png_set_gray_to_rgb(png);
    out->channels = 3;
    out->bit_depth = 8;
  } else {
    if (!is_gray) png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    out->channels = 1;
    if (want == Want::Gray8) {
      if (depth == 16) png_set_strip_16(png);
      out->bit_depth = 8;
    } else {
      out->bit_depth = depth == 16 ? 16 : 8;
    }
  }
  png_read_update_info(png, info);
  out->width = png_get_image_width(png, info);
  out->height = png_get_image_height(png, info);
  out->rowbytes = png_get_rowbytes(png, info);
  return true;
}

bool read_png_body(png_structp png, png_bytep* rows) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_read_image(png, rows);
  png_read_end(png, nullptr);
  return true;
}

DecodedPng decode(const fs::path& path, Want want) {
  auto file = open_file(path, "rb");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    fail(Errc::FormatError, "'" + path.string() + "' is not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(Errc::IoError, "libpng allocation failed");
  }
  HeaderInfo header{};
  if (!read_png_header(png, info, file.get(), want, &header)) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(Errc::FormatError, "corrupt PNG '" + path.string() + "'");
  }
  DecodedPng out;
  out.width = static_cast<int>(header.width);
  out.height = static_cast<int>(header.height);
  out.channels = header.channels;
  out.bit_depth = header.bit_depth;
  out.bytes.resize(header.rowbytes * header.height);
  std::vector<png_bytep> rows(header.height);
  for (std::size_t y = 0; y < rows.size(); ++y) rows[y] = out.bytes.data() + header.rowbytes * y;
  const bool ok = read_png_body(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  if (!ok) fail(Errc::FormatError, "corrupt PNG '" + path.string() + "'");
  return out;
}

// Kept free of objects with destructors: it calls setjmp.
bool write_png_stream(std::FILE* file, int width, int height, int bit_depth, int color_type,
                      png_bytep* rows, std::size_t n_rows) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_init_io(png, file);
  png_set_compression_level(png, 6);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
               bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_rows(png, rows, static_cast<png_uint_32>(n_rows));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

void encode(const fs::path& path, int width, int height, int bit_depth, int color_type,
            const std::vector<std::vector<std::uint8_t>>& rows) {
  auto file = open_file(path, "wb");
  std::vector<png_bytep> ptrs(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) ptrs[i] = const_cast<png_bytep>(rows[i].data());
  if (!write_png_stream(file.get(), width, height, bit_depth, color_type, ptrs.data(), ptrs.size())) {
    fail(Errc::IoError, "failed writing PNG '" + path.string() + "'");
  }
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    fail(Errc::FormatError, "invalid JSON in '" + path.string() + "': " + e.what());
  }
}

}  // namespace

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::IoError, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::IoError, "cannot write '" + path.string() + "'");
  out << text;
}

RgbImage read_png_rgb(const fs::path& path) {
  auto d = decode(path, Want::Rgb8);
  return RgbImage(d.width, d.height, std::move(d.bytes));
}

void write_png_rgb(const fs::path& path, const RgbImage& image) {
  require(!image.empty(), Errc::EmptyImage, "cannot write an empty image");
  std::vector<std::vector<std::uint8_t>> rows(static_cast<std::size_t>(image.height()));
  const std::size_t rb = static_cast<std::size_t>(image.width()) * 3;
  for (int y = 0; y < image.height(); ++y) {
    const auto* p = image.pixel(0, y);
    rows[static_cast<std::size_t>(y)].assign(p, p + rb);
  }
  encode(path, image.width(), image.height(), 8, PNG_COLOR_TYPE_RGB, rows);
}

Plane<std::uint16_t> read_png_gray16(const fs::path& path) {
  auto d = decode(path, Want::Gray16);
  Plane<std::uint16_t> out(d.width, d.height);
  auto& v = out.values();
  if (d.bit_depth == 16) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = static_cast<std::uint16_t>((d.bytes[2 * i] << 8) | d.bytes[2 * i + 1]);
    }
  } else {
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<std::uint16_t>(d.bytes[i] * 257);
  }
  return out;
}

void write_png_gray16(const fs::path& path, const Plane<std::uint16_t>& plane) {
  std::vector<std::vector<std::uint8_t>> rows(static_cast<std::size_t>(plane.height()));
  for (int y = 0; y < plane.height(); ++y) {
    auto& r = rows[static_cast<std::size_t>(y)];
    r.resize(static_cast<std::size_t>(plane.width()) * 2);
    auto src = plane.row(y);
    for (std::size_t x = 0; x < src.size(); ++x) {
      r[2 * x] = static_cast<std::uint8_t>(src[x] >> 8);
      r[2 * x + 1] = static_cast<std::uint8_t>(src[x] & 0xFF);
    }
  }
  encode(path, plane.width(), plane.height(), 16, PNG_COLOR_TYPE_GRAY, rows);
}

BinaryPlane read_png_mask(const fs::path& path) {
  auto d = decode(path, Want::Gray8);
  BinaryPlane out(d.width, d.height, 0);
  auto& v = out.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = d.bytes[i] ? 1 : 0;
  return out;
}

void write_png_mask(const fs::path& path, const BinaryPlane& mask) {
  std::vector<std::vector<std::uint8_t>> rows(static_cast<std::size_t>(mask.height()));
  const std::size_t rb = (static_cast<std::size_t>(mask.width()) + 7) / 8;
  for (int y = 0; y < mask.height(); ++y) {
    auto& r = rows[static_cast<std::size_t>(y)];
    r.assign(rb, 0);
    auto src = mask.row(y);
    for (std::size_t x = 0; x < src.size(); ++x) {
      if (src[x]) r[x / 8] = static_cast<std::uint8_t>(r[x / 8] | (0x80 >> (x % 8)));
    }
  }
  encode(path, mask.width(), mask.height(), 1, PNG_COLOR_TYPE_GRAY, rows);
}

SlideRaster load_slide(const fs::path& png_path) {
  auto image = read_png_rgb(png_path);
  std::string slide_id = png_path.stem().string();
  std::optional<double> mpp;
  fs::path sidecar = png_path;
  sidecar.replace_extension(".json");
  if (fs::exists(sidecar)) {
    auto j = read_json(sidecar);
    if (j.contains("slide_id")) slide_id = j.at("slide_id").get<std::string>();
    if (j.contains("microns_per_pixel") && !j.at("microns_per_pixel").is_null()) {
      mpp = j.at("microns_per_pixel").get<double>();
    }
  }
  return SlideRaster(slide_id, std::move(image), mpp);
}

void save_slide(const fs::path& png_path, const SlideRaster& slide) {
  if (png_path.has_parent_path()) fs::create_directories(png_path.parent_path());
  write_png_rgb(png_path, slide.image());
  json j;
  j["slide_id"] = slide.slide_id();
  j["microns_per_pixel"] = slide.microns_per_pixel() ? json(*slide.microns_per_pixel()) : json(nullptr);
  fs::path sidecar = png_path;
  sidecar.replace_extension(".json");
  write_text(sidecar, j.dump(2) + "\n");
}

void save_probability_map(const fs::path& dir, const ClassProbabilityMap& map) {
  fs::create_directories(dir);
  json classes = json::array();
  for (std::size_t c = 0; c < map.classes().size(); ++c) {
    const auto name = std::string(class_name(map.classes()[c]));
    classes.push_back(name);
    Plane<std::uint16_t> q(map.width(), map.height());
    const auto& src = map.plane(c).values();
    auto& dst = q.values();
    for (std::size_t i = 0; i < src.size(); ++i) {
      const double v = std::clamp(static_cast<double>(src[i]), 0.0, 1.0);
      dst[i] = static_cast<std::uint16_t>(std::lround(v * 65535.0));
    }
    write_png_gray16(dir / ("prob_" + name + ".png"), q);
  }
  json h;
  h["classes"] = classes;
  h["downsample_factor"] = map.downsample();
  h["width"] = map.width();
  h["height"] = map.height();
  h["threshold"] = nullptr;
  write_text(dir / "probabilities.json", h.dump(2) + "\n");
}

ClassProbabilityMap load_probability_map(const fs::path& dir) {
  auto h = read_json(dir / "probabilities.json");
  std::vector<TissueClass> classes;
  for (const auto& c : h.at("classes")) classes.push_back(parse_class(c.get<std::string>()));
  ClassProbabilityMap map(classes, h.at("downsample_factor").get<int>(), h.at("width").get<int>(),
                          h.at("height").get<int>());
  for (std::size_t c = 0; c < classes.size(); ++c) {
    auto q = read_png_gray16(dir / ("prob_" + std::string(class_name(classes[c])) + ".png"));
    require(q.width() == map.width() && q.height() == map.height(), Errc::ShapeMismatch,
            "probability plane size disagrees with header");
    auto& dst = map.plane(c).values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<float>(q.values()[i] / 65535.0);
  }
  return map;
}

void save_mask_set(const fs::path& dir, const CompartmentMaskSet& masks) {
  fs::create_directories(dir);
  json classes = json::array();
  for (std::size_t c = 0; c < masks.classes.size(); ++c) {
    const auto name = std::string(class_name(masks.classes[c]));
    classes.push_back(name);
    write_png_mask(dir / ("mask_" + name + ".png"), masks.planes[c]);
  }
  write_png_mask(dir / "mask_gland.png", masks.gland);
  json h;
  h["classes"] = classes;
  h["downsample_factor"] = masks.downsample;
  h["width"] = masks.width();
  h["height"] = masks.height();
  h["threshold"] = masks.threshold;
  write_text(dir / "masks.json", h.dump(2) + "\n");
}

CompartmentMaskSet load_mask_set(const fs::path& dir) {
  auto h = read_json(dir / "masks.json");
  CompartmentMaskSet masks;
  masks.downsample = h.at("downsample_factor").get<int>();
  masks.threshold = h.at("threshold").is_null() ? kDefaultThreshold : h.at("threshold").get<double>();
  const int w = h.at("width").get<int>();
  const int hgt = h.at("height").get<int>();
  for (const auto& c : h.at("classes")) {
    const auto cls = parse_class(c.get<std::string>());
    masks.classes.push_back(cls);
    auto plane = read_png_mask(dir / ("mask_" + c.get<std::string>() + ".png"));
    require(plane.width() == w && plane.height() == hgt, Errc::ShapeMismatch,
            "mask size disagrees with header");
    masks.planes.push_back(std::move(plane));
  }
  masks.gland = read_png_mask(dir / "mask_gland.png");
  require(masks.gland.width() == w && masks.gland.height() == hgt, Errc::ShapeMismatch,
          "gland mask size disagrees with header");
  return masks;
}

}  // namespace hit::io
