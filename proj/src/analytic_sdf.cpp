#include "nlr/sdf.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "nlr/parallel.hpp"

namespace nlr {

double SignedDistance::value(const Vec3& p) const {
  double v = 0;
  evaluate(std::span<const Vec3>(&p, 1), std::span<double>(&v, 1));
  return v;
}

Vec3 SignedDistance::gradient_at(const Vec3& p) const {
  Vec3 g;
  gradient(std::span<const Vec3>(&p, 1), std::span<Vec3>(&g, 1));
  return g;
}

void SphereSdf::evaluate(std::span<const Vec3> points, std::span<double> out) const {
  for (std::size_t i = 0; i < points.size(); ++i) out[i] = scale_ * (points[i].norm() - radius_);
}

void SphereSdf::gradient(std::span<const Vec3> points, std::span<Vec3> out) const {
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double n = points[i].norm();
    out[i] = n > 0 ? Vec3(scale_ * points[i] / n) : Vec3(scale_, 0, 0);
  }
}

void TorusSdf::evaluate(std::span<const Vec3> points, std::span<double> out) const {
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec3& p = points[i];
    const double q = std::hypot(p.x(), p.y()) - major_;
    out[i] = std::hypot(q, p.z()) - minor_;
  }
}

void TorusSdf::gradient(std::span<const Vec3> points, std::span<Vec3> out) const {
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec3& p = points[i];
    const double rxy = std::hypot(p.x(), p.y());
    const double q = rxy - major_;
    const double d = std::hypot(q, p.z());
    if (d == 0) {
      out[i] = Vec3::UnitZ();
      continue;
    }
    const double cx = rxy > 0 ? p.x() / rxy : 1.0;
    const double cy = rxy > 0 ? p.y() / rxy : 0.0;
    out[i] = Vec3(q / d * cx, q / d * cy, p.z() / d);
  }
}

void BoxSdf::evaluate(std::span<const Vec3> points, std::span<double> out) const {
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec3 q = points[i].cwiseAbs() - half_;
    out[i] = q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
  }
}

void BoxSdf::gradient(std::span<const Vec3> points, std::span<Vec3> out) const {
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec3& p = points[i];
    const Vec3 q = p.cwiseAbs() - half_;
    const Vec3 sign(p.x() < 0 ? -1 : 1, p.y() < 0 ? -1 : 1, p.z() < 0 ? -1 : 1);
    const Vec3 outside = q.cwiseMax(0.0);
    if (outside.norm() > 0) {
      out[i] = outside.normalized().cwiseProduct(sign);
    } else {
      int axis = 0;
      q.maxCoeff(&axis);
      Vec3 g = Vec3::Zero();
      g[axis] = sign[axis];
      out[i] = g;
    }
  }
}

namespace {

constexpr std::size_t kNeuralChunk = 512;

}  // namespace

void NeuralSdf::evaluate(std::span<const Vec3> points, std::span<double> out) const {
  const std::size_t chunks = (points.size() + kNeuralChunk - 1) / kNeuralChunk;
  parallel_for(chunks, [&](std::size_t c) {
    const std::size_t begin = c * kNeuralChunk;
    const std::size_t n = std::min(kNeuralChunk, points.size() - begin);
    Mat<float> x(3, n);
    for (std::size_t i = 0; i < n; ++i) x.col(i) = points[begin + i].cast<float>();
    const Mat<float> f = nlr::evaluate(net_, x);
    for (std::size_t i = 0; i < n; ++i) out[begin + i] = f(0, i);
  });
}

void NeuralSdf::gradient(std::span<const Vec3> points, std::span<Vec3> out) const {
  const std::size_t chunks = (points.size() + kNeuralChunk - 1) / kNeuralChunk;
  parallel_for(chunks, [&](std::size_t c) {
    const std::size_t begin = c * kNeuralChunk;
    const std::size_t n = std::min(kNeuralChunk, points.size() - begin);
    JetSeeds<float> seeds;
    seeds.x.resize(3, n);
    for (std::size_t i = 0; i < n; ++i) seeds.x.col(i) = points[begin + i].cast<float>();
    JetLayout layout;
    layout.tangents = 3;
    for (int j = 0; j < 3; ++j) {
      Mat<float> e = Mat<float>::Zero(3, n);
      e.row(j).setOnes();
      seeds.tangent.push_back(std::move(e));
    }
    const auto tape = forward_jet(net_, std::move(seeds), layout);
    for (std::size_t i = 0; i < n; ++i) {
      out[begin + i] = Vec3(tape.tangent_output(0)(0, i), tape.tangent_output(1)(0, i), tape.tangent_output(2)(0, i));
    }
  });
}

std::unique_ptr<SignedDistance> make_shape(const ShapeSpec& spec) {
  switch (spec.kind) {
    case ShapeKind::Sphere:
      return std::make_unique<SphereSdf>(spec.radius);
    case ShapeKind::Torus:
      return std::make_unique<TorusSdf>(spec.major, spec.minor);
    case ShapeKind::Box:
      return std::make_unique<BoxSdf>(spec.half_extents);
  }
  throw InvalidArgument("scene_io: unknown shape");
}

ShapeKind parse_shape_kind(const std::string& name) {
  if (name == "sphere") return ShapeKind::Sphere;
  if (name == "torus") return ShapeKind::Torus;
  if (name == "box") return ShapeKind::Box;
  throw InvalidArgument("scene_io: unknown shape '" + name + "' (expected sphere, torus or box)");
}

std::string to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::Sphere:
      return "sphere";
    case ShapeKind::Torus:
      return "torus";
    case ShapeKind::Box:
      return "box";
  }
  return "unknown";
}

}  // namespace nlr
