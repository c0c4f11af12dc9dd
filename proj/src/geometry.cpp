#include "nlr/geometry.hpp"

#include <cmath>
#include <string>

#include "nlr/errors.hpp"

namespace nlr {

Mat4 checked_inverse(const Mat4& m, const char* what) {
  Eigen::FullPivLU<Eigen::Matrix4d> lu(m);
  // Relative threshold so that uniformly scaled matrices behave the same.
  lu.setThreshold(1e-12);
  if (!m.allFinite() || !lu.isInvertible()) {
    throw SingularMatrix(std::string("geometry: ") + what + " matrix is not invertible");
  }
  return lu.inverse();
}

Camera::Camera(const Mat4& view, const Mat4& proj, int width, int height)
    : view_(view), proj_(proj), width_(width), height_(height) {
  if (width < 1 || height < 1) {
    throw InvalidArgument("geometry: camera dimensions must be positive");
  }
  view_inv_ = checked_inverse(view_, "view");
  checked_inverse(proj_, "projection");
  view_proj_ = proj_ * view_;
  view_proj_inv_ = checked_inverse(view_proj_, "view-projection");
  center_ = (view_inv_ * Vec4(0, 0, 0, 1)).hnormalized();
}

Vec3 Camera::forward() const {
  return (view_inv_ * Vec4(0, 0, -1, 0)).head<3>().normalized();
}

PixelCoord Camera::pixel_center(double px, double py) const {
  return {Vec2(2.0 * (px + 0.5) / width_ - 1.0, 1.0 - 2.0 * (py + 0.5) / height_)};
}

Vec2 Camera::ndc_to_pixel(const Vec2& ndc) const {
  return Vec2((ndc.x() + 1.0) * 0.5 * width_, (1.0 - ndc.y()) * 0.5 * height_);
}

std::optional<Vec3> Camera::project(const Vec3& world) const {
  const Vec4 clip = view_proj_ * world.homogeneous();
  if (clip.w() <= 0.0) return std::nullopt;
  return clip.hnormalized();
}

bool Camera::is_orthographic() const {
  return proj_(3, 0) == 0.0 && proj_(3, 1) == 0.0 && proj_(3, 2) == 0.0;
}

Ray ray_from_pixel(const Camera& cam, const PixelCoord& u) {
  Ray ray;
  ray.origin = cam.center();
  if (cam.is_orthographic()) {
    // Affine projection has no finite center of projection; rays are parallel
    // to the viewing axis.
    ray.dir = cam.forward();
    return ray;
  }
  const Vec3 on_plane = (cam.view_proj_inverse() * Vec4(u.u.x(), u.u.y(), 0.0, 1.0)).hnormalized();
  ray.dir = (on_plane - ray.origin).normalized();
  return ray;
}

Ray ray_from_pixel(const Camera& cam, double px, double py) {
  return ray_from_pixel(cam, cam.pixel_center(px, py));
}

std::optional<Interval> intersect_unit_sphere(const Ray& ray, double radius) {
  const double b = ray.origin.dot(ray.dir);
  const double c = ray.origin.squaredNorm() - radius * radius;
  const double disc = b * b - c;
  if (disc < 0.0) return std::nullopt;
  const double s = std::sqrt(disc);
  return Interval{-b - s, -b + s};
}

Mat4 look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 f = (target - eye).normalized();
  Vec3 s = f.cross(up);
  if (s.norm() < 1e-12) s = f.cross(std::abs(f.z()) < 0.9 ? Vec3::UnitZ() : Vec3::UnitX());
  s.normalize();
  const Vec3 u = s.cross(f);
  Mat4 m = Mat4::Identity();
  m.block<1, 3>(0, 0) = s.transpose();
  m.block<1, 3>(1, 0) = u.transpose();
  m.block<1, 3>(2, 0) = -f.transpose();
  m(0, 3) = -s.dot(eye);
  m(1, 3) = -u.dot(eye);
  m(2, 3) = f.dot(eye);
  return m;
}

Mat4 perspective(double fovy_radians, double aspect, double z_near, double z_far) {
  const double f = 1.0 / std::tan(0.5 * fovy_radians);
  Mat4 m = Mat4::Zero();
  m(0, 0) = f / aspect;
  m(1, 1) = f;
  m(2, 2) = (z_far + z_near) / (z_near - z_far);
  m(2, 3) = 2.0 * z_far * z_near / (z_near - z_far);
  m(3, 2) = -1.0;
  return m;
}

}  // namespace nlr
