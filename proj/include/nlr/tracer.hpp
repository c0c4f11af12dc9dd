#pragma once

#include <span>
#include <vector>

#include "nlr/geometry.hpp"
#include "nlr/sdf.hpp"

namespace nlr {

struct TraceConfig {
  int n_steps = 16;
  double converge_eps = 5e-5;  // forward/backward trace counts as converged
  double accept_eps = 0.005;   // largest residual accepted as a surface hit
  int scan_samples = 100;
  int section_steps = 8;
  double denom_clamp = 0.01;
  double domain_radius = 1.0;

  // Throws InvalidArgument when a field is non-positive or
  // converge_eps >= accept_eps.
  void validate() const;
};

enum class HitStatus { Converged, Refined, Miss };

struct SurfaceHit {
  Vec3 x = Vec3::Zero();
  double t = 0;
  Vec3 n = Vec3::Zero();
  double residual = 0;
  HitStatus status = HitStatus::Miss;

  bool hit() const { return status != HitStatus::Miss; }
};

struct ForwardTrace {
  Vec3 x = Vec3::Zero();
  double t = 0;
  double f = 0;           // SDF at x
  double f_min = 0;       // smallest SDF value seen at the iterates
  bool entered = false;   // the ray intersects the domain sphere ahead of its origin
  bool converged = false;
};

struct MinSdf {
  double f_min = 0;
  double t_argmin = 0;
  bool valid = false;  // false when the ray misses the domain
};

// Parameter range of the ray inside the domain sphere, clipped to t >= 0.
std::optional<Interval> domain_interval(const Ray& ray, double radius);

ForwardTrace trace_forward(const SignedDistance& f, const Ray& ray, const TraceConfig& cfg);
std::vector<ForwardTrace> trace_forward(const SignedDistance& f, std::span<const Ray> rays, const TraceConfig& cfg);

// Forward trace, then for unconverged rays a backward trace from the far
// domain boundary, a uniform scan of the bracket for the first outside to
// inside crossing and bisection of that crossing. Normals are filled for
// hits when with_normals is set.
SurfaceHit trace_bidirectional(const SignedDistance& f, const Ray& ray, const TraceConfig& cfg);
std::vector<SurfaceHit> trace_bidirectional(const SignedDistance& f, std::span<const Ray> rays,
                                            const TraceConfig& cfg, bool with_normals = true);

MinSdf min_sdf_along_ray(const SignedDistance& f, const Ray& ray, const TraceConfig& cfg);
std::vector<MinSdf> min_sdf_along_ray(const SignedDistance& f, std::span<const Ray> rays, const TraceConfig& cfg);

// One gradient-adjusted Newton step along the ray:
//   x_n = x_hat - f(x_hat) / clamp(grad f(x_hat) . dir) * dir,
// with |denominator| >= cfg.denom_clamp. Value-only version; the trainer
// differentiates the same expression w.r.t. the network parameters.
// Throws DegenerateNormal if |grad f| < 1e-8, InvalidArgument if
// |f(x_hat)| >= accept_eps.
Vec3 differentiable_refine(const SignedDistance& f, const Vec3& x_hat, const Ray& ray, const TraceConfig& cfg);

// The clamped denominator used by differentiable_refine.
double clamp_denominator(double d, double min_abs);

}  // namespace nlr
