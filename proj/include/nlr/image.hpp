#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace nlr {

// Interleaved float image, row 0 at the top.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> data;

  Image() = default;
  Image(int w, int h, int c, float fill = 0.0f)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  float& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  float at(int x, int y, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  bool empty() const { return data.empty(); }
};

// sRGB transfer. to_linear is a 256-entry table, and to_srgb8 inverts it
// exactly: to_srgb8(srgb8_to_linear(b)) == b for every byte.
float srgb8_to_linear(std::uint8_t v);
std::uint8_t linear_to_srgb8(float v);
// Rounds a linear value to the nearest representable 8-bit sRGB level.
float quantize_linear(float v);

// PNG with 3 or 4 channels. Color is sRGB-encoded on disk and linear in
// memory; alpha is stored linearly.
Image load_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& img);

// 8-bit grayscale masks: 255 = foreground, loaded with a threshold of 128.
std::vector<std::uint8_t> load_mask_png(const std::filesystem::path& path, int& width, int& height);
void write_mask_png(const std::filesystem::path& path, const std::vector<std::uint8_t>& mask, int width, int height);

// Single-channel PFM ("Pf"), little-endian, rows stored bottom to top as the
// format requires; the in-memory image keeps row 0 at the top.
Image load_pfm(const std::filesystem::path& path);
void write_pfm(const std::filesystem::path& path, const Image& img);

}  // namespace nlr
