#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "nlr/fields.hpp"
#include "nlr/geometry.hpp"
#include "nlr/image.hpp"
#include "nlr/marching_cubes.hpp"
#include "nlr/mesh.hpp"
#include "nlr/scene.hpp"
#include "nlr/tracer.hpp"

namespace nlr {

struct BundleMeta {
  double iso = kDefaultIso;
  int resolution = 512;
  std::string checkpoint_hash;
  int texture_level = 1;

  bool operator==(const BundleMeta&) const = default;
};

// Mesh plus N projective textures (RGBA) with matching depth maps
// (distance from the texture camera center, 0 where alpha is 0).
struct ExportBundle {
  Mesh mesh;
  std::vector<Image> textures;
  std::vector<Image> depths;
  std::vector<Camera> cameras;
  BundleMeta meta;

  std::size_t size() const { return cameras.size(); }
  // DimensionMismatch when counts or image sizes disagree; NonFinite for a
  // non-finite depth under positive alpha.
  void validate() const;
};

// Refines a cols x rows camera grid (row-major, as from the 3 x 2 capture
// layout) by 2^(level-1): level 1 returns the input, level 2 gives 15 and
// level 3 gives 45 cameras for a 3 x 2 base. New poses interpolate azimuth,
// elevation and distance about the common look-at target and re-aim at it.
// Throws DegenerateLayout when the base poses are collinear or share no
// target, InvalidArgument for a bad level or grid shape.
std::vector<Camera> generate_texture_cameras(const std::vector<Camera>& base, int level, int cols = 3, int rows = 2);

// Point closest to all camera viewing axes (least squares).
Vec3 common_target(const std::vector<Camera>& cams);

struct Bake {
  std::vector<Image> textures;
  std::vector<Image> depths;
};
// Neural renders at each camera: RGB clamped to [0,1], alpha = hit mask,
// depth = hit distance.
Bake bake_textures(const FieldModel<float>& model, const std::vector<Camera>& cameras, const TraceConfig& cfg);

// Same layout from the analytic scene: exact hit distances and the quantized
// ground-truth shading.
Bake bake_synthetic(const SyntheticRenderer& renderer, const std::vector<Camera>& cameras);

struct ExportOptions {
  MarchingCubesOptions mc;
  int texture_level = 1;
  int grid_cols = 3, grid_rows = 2;  // shape of the base camera grid
  TraceConfig trace;
};

ExportBundle export_bundle(const FieldModel<float>& model, const std::vector<Camera>& base_cameras,
                           const ExportOptions& opts);

// Bundle directory: mesh.obj, cameras.json, tex/tex_###.png,
// depth/dep_###.pfm and meta.json.
void write_bundle(const ExportBundle& bundle, const std::filesystem::path& dir);
// MissingFile / ParseError name the offending file.
ExportBundle read_bundle(const std::filesystem::path& dir);

}  // namespace nlr
