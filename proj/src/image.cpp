#include "nlr/image.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "nlr/errors.hpp"

namespace nlr {
namespace {

const std::array<float, 256>& srgb_table() {
  static const std::array<float, 256> table = [] {
    std::array<float, 256> t{};
    for (int i = 0; i < 256; ++i) {
      const double c = i / 255.0;
      t[i] = static_cast<float>(c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4));
    }
    return t;
  }();
  return table;
}

void check_exists(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingFile("image: missing file " + path.string());
}

}  // namespace

float srgb8_to_linear(std::uint8_t v) { return srgb_table()[v]; }

std::uint8_t linear_to_srgb8(float v) {
  // Nearest table entry; the table is increasing, so search for the
  // midpoint crossing.
  const auto& t = srgb_table();
  if (!(v > 0.0f)) return 0;
  if (v >= 1.0f) return 255;
  const auto it = std::lower_bound(t.begin(), t.end(), v);
  const int hi = static_cast<int>(it - t.begin());
  if (hi == 0) return 0;
  const int lo = hi - 1;
  return static_cast<std::uint8_t>(v - t[lo] <= t[hi] - v ? lo : hi);
}

float quantize_linear(float v) { return srgb8_to_linear(linear_to_srgb8(v)); }

Image load_png(const std::filesystem::path& path) {
  check_exists(path);
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    throw ParseError("image: cannot read PNG " + path.string() + ": " + png.message);
  }
  const bool alpha = (png.format & PNG_FORMAT_FLAG_ALPHA) != 0;
  png.format = alpha ? PNG_FORMAT_RGBA : PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buf.data(), 0, nullptr)) {
    throw ParseError("image: cannot decode PNG " + path.string() + ": " + png.message);
  }
  const int c = alpha ? 4 : 3;
  Image img(static_cast<int>(png.width), static_cast<int>(png.height), c);
  for (std::size_t i = 0; i < buf.size(); ++i) {
    img.data[i] = (i % c == 3) ? buf[i] / 255.0f : srgb8_to_linear(buf[i]);
  }
  return img;
}

void write_png(const std::filesystem::path& path, const Image& img) {
  if (img.channels != 3 && img.channels != 4) throw InvalidArgument("image: PNG needs 3 or 4 channels");
  std::vector<std::uint8_t> buf(img.data.size());
  for (std::size_t i = 0; i < buf.size(); ++i) {
    const float v = img.data[i];
    buf[i] = (i % img.channels == 3) ? static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f))
                                     : linear_to_srgb8(v);
  }
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width);
  png.height = static_cast<png_uint_32>(img.height);
  png.format = img.channels == 4 ? PNG_FORMAT_RGBA : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.c_str(), 0, buf.data(), 0, nullptr)) {
    throw IoError("image: cannot write PNG " + path.string() + ": " + png.message);
  }
}

std::vector<std::uint8_t> load_mask_png(const std::filesystem::path& path, int& width, int& height) {
  check_exists(path);
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    throw ParseError("image: cannot read PNG " + path.string() + ": " + png.message);
  }
  png.format = PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buf.data(), 0, nullptr)) {
    throw ParseError("image: cannot decode PNG " + path.string() + ": " + png.message);
  }
  width = static_cast<int>(png.width);
  height = static_cast<int>(png.height);
  for (auto& v : buf) v = v >= 128 ? 1 : 0;
  return buf;
}

void write_mask_png(const std::filesystem::path& path, const std::vector<std::uint8_t>& mask, int width,
                    int height) {
  if (mask.size() != static_cast<std::size_t>(width) * height) throw DimensionMismatch("image: mask size");
  std::vector<std::uint8_t> buf(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) buf[i] = mask[i] ? 255 : 0;
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(width);
  png.height = static_cast<png_uint_32>(height);
  png.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&png, path.c_str(), 0, buf.data(), 0, nullptr)) {
    throw IoError("image: cannot write PNG " + path.string() + ": " + png.message);
  }
}

Image load_pfm(const std::filesystem::path& path) {
  check_exists(path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("image: cannot open " + path.string());
  std::string magic;
  int w = 0, h = 0;
  double scale = 0;
  in >> magic >> w >> h >> scale;
  in.get();  // single whitespace before the raster
  if (!in || (magic != "Pf" && magic != "PF") || w <= 0 || h <= 0 || scale == 0) {
    throw ParseError("image: bad PFM header in " + path.string());
  }
  const int c = magic == "PF" ? 3 : 1;
  const bool little = scale < 0;
  Image img(w, h, c);
  std::vector<std::uint32_t> row(static_cast<std::size_t>(w) * c);
  for (int y = h - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size() * 4));
    if (!in) throw ParseError("image: truncated PFM " + path.string());
    for (std::size_t i = 0; i < row.size(); ++i) {
      std::uint32_t v = row[i];
      if (little != (std::endian::native == std::endian::little)) v = __builtin_bswap32(v);
      img.data[static_cast<std::size_t>(y) * w * c + i] = std::bit_cast<float>(v);
    }
  }
  return img;
}

void write_pfm(const std::filesystem::path& path, const Image& img) {
  if (img.channels != 1 && img.channels != 3) throw InvalidArgument("image: PFM needs 1 or 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("image: cannot write " + path.string());
  out << (img.channels == 1 ? "Pf" : "PF") << "\n" << img.width << " " << img.height << "\n-1.0\n";
  const std::size_t row = static_cast<std::size_t>(img.width) * img.channels;
  for (int y = img.height - 1; y >= 0; --y) {
    for (std::size_t i = 0; i < row; ++i) {
      std::uint32_t v = std::bit_cast<std::uint32_t>(img.data[y * row + i]);
      if constexpr (std::endian::native == std::endian::big) v = __builtin_bswap32(v);
      out.write(reinterpret_cast<const char*>(&v), 4);
    }
  }
  if (!out) throw IoError("image: short write to " + path.string());
}

}  // namespace nlr
