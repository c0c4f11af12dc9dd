#pragma once

#include <Eigen/Dense>
#include <optional>

namespace nlr {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec3f = Eigen::Vector3f;
// Row-major to match the on-disk layout; right-handed, camera looks down -z,
// OpenGL clip conventions with NDC z in [-1, 1].
using Mat4 = Eigen::Matrix<double, 4, 4, Eigen::RowMajor>;

struct Ray {
  Vec3 origin;
  Vec3 dir;  // unit length

  Vec3 at(double t) const { return origin + t * dir; }
};

// Parameter interval [t_near, t_far] along a ray.
struct Interval {
  double t_near;
  double t_far;
};

// Location on the projection plane in normalized device coordinates.
struct PixelCoord {
  Vec2 u;
};

class Camera {
 public:
  // Throws SingularMatrix if view or proj is not invertible, InvalidArgument
  // for empty image dimensions.
  Camera(const Mat4& view, const Mat4& proj, int width, int height);

  const Mat4& view() const { return view_; }
  const Mat4& proj() const { return proj_; }
  const Mat4& view_inverse() const { return view_inv_; }
  const Mat4& view_proj() const { return view_proj_; }
  const Mat4& view_proj_inverse() const { return view_proj_inv_; }
  int width() const { return width_; }
  int height() const { return height_; }

  // World-space camera center and unit viewing direction.
  Vec3 center() const { return center_; }
  Vec3 forward() const;

  // NDC of the center of pixel (px, py); row 0 is the top of the image.
  PixelCoord pixel_center(double px, double py) const;
  // Continuous pixel coordinates (pixel centers at +0.5) of an NDC location.
  Vec2 ndc_to_pixel(const Vec2& ndc) const;

  // Clip-space projection of a world point. Empty if the point is behind the
  // camera (w <= 0). Returned vector is NDC (x, y, z).
  std::optional<Vec3> project(const Vec3& world) const;

  bool is_orthographic() const;

 private:
  Mat4 view_, proj_;
  Mat4 view_inv_, view_proj_, view_proj_inv_;
  Vec3 center_;
  int width_, height_;
};

// Inverts m, throwing SingularMatrix (with `what` in the message) when m is
// numerically singular.
Mat4 checked_inverse(const Mat4& m, const char* what);

Ray ray_from_pixel(const Camera& cam, const PixelCoord& u);
Ray ray_from_pixel(const Camera& cam, double px, double py);

// Both intersections of the ray line with a centered sphere, or empty on a
// miss. t values may be negative when the origin lies inside or past the
// sphere.
std::optional<Interval> intersect_unit_sphere(const Ray& ray, double radius = 1.0);

Mat4 look_at(const Vec3& eye, const Vec3& target, const Vec3& up);
Mat4 perspective(double fovy_radians, double aspect, double z_near, double z_far);

}  // namespace nlr
