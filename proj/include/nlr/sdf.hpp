#pragma once

#include <memory>
#include <span>
#include <string>

#include "nlr/fields.hpp"
#include "nlr/geometry.hpp"

namespace nlr {

// A signed distance field evaluated in batches: negative inside, positive
// outside. Implementations must be safe for concurrent const use.
class SignedDistance {
 public:
  virtual ~SignedDistance() = default;
  virtual void evaluate(std::span<const Vec3> points, std::span<double> out) const = 0;
  virtual void gradient(std::span<const Vec3> points, std::span<Vec3> out) const = 0;

  double value(const Vec3& p) const;
  Vec3 gradient_at(const Vec3& p) const;
};

class SphereSdf final : public SignedDistance {
 public:
  explicit SphereSdf(double radius, double scale = 1.0) : radius_(radius), scale_(scale) {}
  void evaluate(std::span<const Vec3> points, std::span<double> out) const override;
  void gradient(std::span<const Vec3> points, std::span<Vec3> out) const override;
  double radius() const { return radius_; }

 private:
  double radius_;
  double scale_;  // f = scale * (|x| - r); scale != 1 breaks the eikonal property
};

// Torus around the z axis.
class TorusSdf final : public SignedDistance {
 public:
  TorusSdf(double major, double minor) : major_(major), minor_(minor) {}
  void evaluate(std::span<const Vec3> points, std::span<double> out) const override;
  void gradient(std::span<const Vec3> points, std::span<Vec3> out) const override;

 private:
  double major_, minor_;
};

class BoxSdf final : public SignedDistance {
 public:
  explicit BoxSdf(const Vec3& half_extents) : half_(half_extents) {}
  void evaluate(std::span<const Vec3> points, std::span<double> out) const override;
  void gradient(std::span<const Vec3> points, std::span<Vec3> out) const override;

 private:
  Vec3 half_;
};

// Adapts the SDF network (single precision) to the batched interface.
class NeuralSdf final : public SignedDistance {
 public:
  explicit NeuralSdf(const FieldNetwork<float>& net) : net_(net) {}
  void evaluate(std::span<const Vec3> points, std::span<double> out) const override;
  void gradient(std::span<const Vec3> points, std::span<Vec3> out) const override;

 private:
  const FieldNetwork<float>& net_;
};

enum class ShapeKind { Sphere, Torus, Box };

struct ShapeSpec {
  ShapeKind kind = ShapeKind::Sphere;
  double radius = 0.5;                 // sphere
  double major = 0.45, minor = 0.2;    // torus
  Vec3 half_extents{0.4, 0.4, 0.4};    // box
};

std::unique_ptr<SignedDistance> make_shape(const ShapeSpec& spec);
ShapeKind parse_shape_kind(const std::string& name);
std::string to_string(ShapeKind kind);

}  // namespace nlr
