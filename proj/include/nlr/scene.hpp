#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "nlr/geometry.hpp"
#include "nlr/image.hpp"
#include "nlr/sdf.hpp"

namespace nlr {

struct View {
  Camera camera;
  Image image;                     // linear RGB in [0,1], 3 channels
  std::vector<std::uint8_t> mask;  // 1 = foreground
  std::string image_file;          // relative to the scene directory
  std::string mask_file;

  std::size_t pixel_count() const { return mask.size(); }
};

struct Scene {
  std::string name;
  std::vector<View> views;

  // Throws EmptyScene without views, DimensionMismatch naming the view when
  // image or mask sizes disagree with the camera.
  void validate() const;
};

// Reads scene.json (path may be the file or its directory):
// {name, views: [{image, mask, view: [16], proj: [16], width, height}]}
// with row-major matrices. Errors name the offending view.
Scene load_scene(const std::filesystem::path& path);

// Writes scene.json plus the PNGs into dir. Views without file names get
// images/view_###.png and masks/mask_###.png.
void write_scene(const Scene& scene, const std::filesystem::path& dir);

// Keeps the listed views (or drops them when `exclude` is set).
Scene select_views(const Scene& scene, const std::vector<int>& indices, bool exclude);

// Camera arrangements around the origin.
enum class CameraLayout { Ring, Grid };

struct SynthSpec {
  ShapeSpec shape;
  CameraLayout layout = CameraLayout::Ring;
  int views = 16;           // ring only; the grid is always 3 x 2
  double distance = 2.5;
  double fovy_deg = 35.0;
  int width = 64;
  int height = 64;
  double elevation_deg = 15.0;  // ring alternates +/- this; grid rows at +/- half
  double grid_spacing_deg = 20.0;
  double checker_frequency = 3.0;  // soft checker cells per unit length
  double specular = 0.5;
  double shininess = 24.0;
  Vec3 light_dir{0.4, 0.8, 0.45};
  std::uint64_t seed = 1;
};

// Shading model of the synthetic scenes; exposed so held-out views and
// texture experiments can render ground truth at any pose.
class SyntheticRenderer {
 public:
  explicit SyntheticRenderer(const SynthSpec& spec);

  const SignedDistance& sdf() const { return *sdf_; }
  const SynthSpec& spec() const { return spec_; }

  Vec3 albedo(const Vec3& x) const;
  Vec3 shade(const Vec3& x, const Vec3& normal, const Vec3& view_dir) const;
  // First surface hit along the ray, if any.
  std::optional<double> intersect(const Ray& ray) const;
  // Image and mask for a camera, pixel-center sampling. Colors are
  // quantized to the 8-bit sRGB grid so a PNG round trip is exact.
  View render(const Camera& cam) const;

 private:
  SynthSpec spec_;
  std::unique_ptr<SignedDistance> sdf_;
  Vec3 phase_;
  Vec3 color_a_, color_b_;
};

// Camera on the orbit sphere of `spec` at the given azimuth (from +z toward +x)
// and elevation, aimed at the origin with +y up.
Camera orbit_camera(const SynthSpec& spec, double azimuth_deg, double elevation_deg);

// Cameras of the layout, all looking at the origin.
std::vector<Camera> synthetic_cameras(const SynthSpec& spec);

struct SyntheticScene {
  Scene scene;
  std::unique_ptr<SyntheticRenderer> renderer;  // ground truth, including the SDF
};

SyntheticScene generate_synthetic(const SynthSpec& spec);

CameraLayout parse_layout(const std::string& name);
std::string to_string(CameraLayout layout);

}  // namespace nlr
