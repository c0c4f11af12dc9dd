#include <cmath>
#include <numbers>
#include <random>

#include "nlr/errors.hpp"
#include "nlr/parallel.hpp"
#include "nlr/scene.hpp"

namespace nlr {
namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

}  // namespace

Camera orbit_camera(const SynthSpec& spec, double azimuth_deg, double elevation_deg) {
  const double az = azimuth_deg * kDeg, el = elevation_deg * kDeg;
  const Vec3 eye = spec.distance * Vec3(std::cos(el) * std::sin(az), std::sin(el), std::cos(el) * std::cos(az));
  const double aspect = static_cast<double>(spec.width) / spec.height;
  return Camera(look_at(eye, Vec3::Zero(), Vec3::UnitY()), perspective(spec.fovy_deg * kDeg, aspect, 0.1, 10.0),
                spec.width, spec.height);
}

CameraLayout parse_layout(const std::string& name) {
  if (name == "ring") return CameraLayout::Ring;
  if (name == "grid") return CameraLayout::Grid;
  throw InvalidArgument("scene: unknown camera layout '" + name + "' (expected ring or grid)");
}

std::string to_string(CameraLayout layout) { return layout == CameraLayout::Ring ? "ring" : "grid"; }

std::vector<Camera> synthetic_cameras(const SynthSpec& spec) {
  if (spec.width <= 0 || spec.height <= 0) throw InvalidArgument("scene: image size must be positive");
  if (spec.distance <= 1.0) throw InvalidArgument("scene: cameras must sit outside the unit domain");
  std::vector<Camera> cams;
  if (spec.layout == CameraLayout::Ring) {
    if (spec.views < 1) throw InvalidArgument("scene: need at least one view");
    for (int i = 0; i < spec.views; ++i) {
      const double el = (i % 2 == 0 ? 1.0 : -1.0) * spec.elevation_deg;
      cams.push_back(orbit_camera(spec, 360.0 * i / spec.views, el));
    }
  } else {
    // 3 columns x 2 rows facing +z, row-major from the top left.
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 3; ++c)
        cams.push_back(orbit_camera(spec, (c - 1) * spec.grid_spacing_deg, (0.5 - r) * spec.grid_spacing_deg));
  }
  return cams;
}

SyntheticRenderer::SyntheticRenderer(const SynthSpec& spec) : spec_(spec), sdf_(make_shape(spec.shape)) {
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  phase_ = Vec3(u(rng), u(rng), u(rng)) * 2.0 * std::numbers::pi;
  color_a_ = Vec3(0.75 + 0.2 * u(rng), 0.35 + 0.2 * u(rng), 0.15 + 0.15 * u(rng));
  color_b_ = Vec3(0.1 + 0.15 * u(rng), 0.3 + 0.2 * u(rng), 0.6 + 0.25 * u(rng));
  if (spec.light_dir.norm() == 0) throw InvalidArgument("scene: light direction must be non-zero");
}

Vec3 SyntheticRenderer::albedo(const Vec3& x) const {
  // Soft 3D checker: the sign pattern of a product of sines, smoothed.
  const double k = spec_.checker_frequency * std::numbers::pi;
  const double s = std::sin(k * x.x() + phase_.x()) * std::sin(k * x.y() + phase_.y()) *
                   std::sin(k * x.z() + phase_.z());
  const double t = 0.5 + 0.5 * std::tanh(4.0 * s);
  return (1.0 - t) * color_a_ + t * color_b_;
}

Vec3 SyntheticRenderer::shade(const Vec3& x, const Vec3& normal, const Vec3& view_dir) const {
  const Vec3 l = spec_.light_dir.normalized();
  const Vec3 n = normal.normalized();
  const double diffuse = std::max(0.0, n.dot(l));
  Vec3 c = albedo(x) * (0.25 + 0.7 * diffuse);
  if (spec_.specular > 0) {
    // Phong lobe around the mirrored light direction; view_dir points from
    // the surface toward the eye.
    const Vec3 r = 2.0 * n.dot(l) * n - l;
    const double s = std::pow(std::max(0.0, r.dot(view_dir.normalized())), spec_.shininess);
    c += Vec3::Constant(spec_.specular * s * (diffuse > 0 ? 1.0 : 0.0));
  }
  return c.cwiseMax(0.0).cwiseMin(1.0);
}

std::optional<double> SyntheticRenderer::intersect(const Ray& ray) const {
  const auto dom = intersect_unit_sphere(ray, 1.0);
  if (!dom || dom->t_far <= 0) return std::nullopt;
  if (spec_.shape.kind == ShapeKind::Sphere) {
    const auto iv = intersect_unit_sphere(ray, spec_.shape.radius);
    if (!iv || iv->t_far <= 0) return std::nullopt;
    return iv->t_near > 0 ? iv->t_near : iv->t_far;
  }
  // Sphere tracing the exact SDF; it is 1-Lipschitz, so no crossing is
  // skipped.
  double t = std::max(dom->t_near, 0.0);
  for (int i = 0; i < 2000 && t <= dom->t_far; ++i) {
    const double f = sdf_->value(ray.at(t));
    if (f < 1e-9) return t;
    t += f;
  }
  return std::nullopt;
}

View SyntheticRenderer::render(const Camera& cam) const {
  const int w = cam.width(), h = cam.height();
  Image img(w, h, 3);
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(w) * h, 0);
  parallel_for(static_cast<std::size_t>(h), [&](std::size_t yy) {
    const int y = static_cast<int>(yy);
    for (int x = 0; x < w; ++x) {
      const Ray ray = ray_from_pixel(cam, x, y);
      const auto t = intersect(ray);
      if (!t) continue;
      const Vec3 p = ray.at(*t);
      const Vec3 c = shade(p, sdf_->gradient_at(p), -ray.dir);
      mask[static_cast<std::size_t>(y) * w + x] = 1;
      for (int ch = 0; ch < 3; ++ch) img.at(x, y, ch) = quantize_linear(static_cast<float>(c[ch]));
    }
  });
  return View{cam, std::move(img), std::move(mask), "", ""};
}

SyntheticScene generate_synthetic(const SynthSpec& spec) {
  SyntheticScene out;
  out.renderer = std::make_unique<SyntheticRenderer>(spec);
  out.scene.name = "synthetic-" + to_string(spec.shape.kind);
  for (const auto& cam : synthetic_cameras(spec)) out.scene.views.push_back(out.renderer->render(cam));
  return out;
}

}  // namespace nlr
