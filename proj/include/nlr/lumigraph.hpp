#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "nlr/exporter.hpp"
#include "nlr/geometry.hpp"
#include "nlr/image.hpp"
#include "nlr/mesh.hpp"

namespace nlr {

struct GBuffer {
  int width = 0, height = 0;
  std::vector<Vec3> position;         // world space; zero where not covered
  std::vector<float> depth;           // distance from the camera center
  std::vector<std::uint8_t> covered;

  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
};

// Z-buffered perspective rasterization at pixel centers with the top-left
// fill rule and perspective-correct world positions. Triangles with a vertex
// behind the camera are skipped. Both windings are drawn.
GBuffer rasterize(const Mesh& mesh, const Camera& cam);

// Unstructured-lumigraph weights for ascending angles tau (k >= 2):
// w_i ~ (1 / tau_i)(1 - tau_i / tau_k), normalized. Zero angles share all
// the weight; when every raw weight vanishes (all angles equal) the result
// is uniform. InvalidArgument on unsorted, negative or too few angles.
std::vector<double> blend_weights(std::span<const double> tau);

inline constexpr double kDepthBias = 1e-3;
inline constexpr int kBlendCount = 5;

// Whether world point x is seen by texture i: it projects inside the frame
// onto a texel with alpha > 0 and the stored depth is at least its distance
// to the texture camera minus bias.
bool occlusion_test(const Vec3& x, std::size_t texture, const ExportBundle& bundle, double bias = kDepthBias);

enum class BlendMode {
  Lumigraph,      // k nearest-angle visible textures blended by blend_weights
  NearestSingle,  // only the texture whose camera is angularly closest to the viewer
};

struct LumigraphOptions {
  int k = kBlendCount;
  double bias = kDepthBias;
  BlendMode mode = BlendMode::Lumigraph;
  bool debug = false;  // covered pixels without a visible texture turn magenta
};

// RGBA frame (linear RGB); background and unresolved pixels have alpha 0.
Image render_view(const ExportBundle& bundle, const Camera& cam, const LumigraphOptions& opts = {});

// Index of the texture camera whose viewing direction is closest in angle
// to cam's.
std::size_t nearest_texture(const ExportBundle& bundle, const Camera& cam);

// Camera path file: a JSON list of row-major 16-number view matrices, either
// bare or under the key "views". ParseError on anything else.
std::vector<Mat4> load_camera_path(const std::filesystem::path& path);

}  // namespace nlr
