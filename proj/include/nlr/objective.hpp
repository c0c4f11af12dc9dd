#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "nlr/fields.hpp"
#include "nlr/geometry.hpp"
#include "nlr/sdf.hpp"
#include "nlr/tracer.hpp"

namespace nlr {

struct LossWeights {
  double w_E = 0.1;
  double w_M = 100.0;
  double w_S = 0.01;
  double alpha = 50.0;

  void validate() const;  // InvalidArgument on negative weights or alpha <= 0
};

struct LossTerms {
  double L_R = 0, L_E = 0, L_M = 0, L_S = 0, total = 0;
};

// Weighted sum; throws NonFinite if any term or the total is NaN/Inf.
LossTerms combine_losses(double L_R, double L_E, double L_M, double L_S, const LossWeights& w);

// (1/|U|) sum |B - c|_1 over the given pairs.
double loss_reconstruction(std::span<const Vec3> pred, std::span<const Vec3> target, std::size_t batch_size);

// Mean of (|grad f| - 1)^2 over sample_count uniform points in [-1,1]^3.
double loss_eikonal(const SignedDistance& f, int sample_count, std::mt19937_64& rng);

// (1/(alpha |U|)) sum BCE(sigmoid(-alpha f_min), m), p clamped to
// [1e-7, 1 - 1e-7].
double loss_mask(std::span<const double> f_min, std::span<const double> m, double alpha, std::size_t batch_size);

// d loss_mask / d f_min for one ray: (m - p) / |U|, zero where p is clamped.
double loss_mask_derivative(double f_min, double m, double alpha, std::size_t batch_size);

// (1/|U|) sum |Laplacian_{r_d} B|^2 at surface points x seen along dirs.
// Normals and features come from the SDF network at x.
template <typename T>
double loss_smoothness(const FieldModel<T>& model, std::span<const Vec3> x, std::span<const Vec3> dirs,
                       std::size_t batch_size);

// One training sample: a camera ray with its pixel color and mask bit.
struct RaySample {
  Ray ray;
  Vec3 rgb = Vec3::Zero();
  bool mask = false;
};

// The gradient-free half of a batch: rays split into the foreground set
// U_f (hit and mask 1) with their traced points, and the rest with the
// location of their minimum SDF value. Eikonal samples are drawn here too.
struct TracedBatch {
  std::vector<RaySample> samples;
  std::vector<std::size_t> foreground;
  std::vector<Vec3> x_hat;  // per foreground ray
  std::vector<std::size_t> background;
  std::vector<Vec3> x_min;  // per background ray
  std::vector<Vec3> eikonal_points;

  std::size_t size() const { return samples.size(); }
};

TracedBatch trace_batch(const SignedDistance& f, std::vector<RaySample> samples, const TraceConfig& cfg,
                        int eikonal_samples, std::mt19937_64& rng);

template <typename T>
struct ObjectiveResult {
  LossTerms terms;
  std::vector<T> gradient;  // SDF parameters, then radiance; empty unless requested
};

struct ObjectiveOptions {
  LossWeights weights;
  double denom_clamp = 0.01;
  bool want_gradient = true;
  // With w_S = 0 the second-order radiance pass is skipped and L_S reads 0
  // unless this is set.
  bool always_smoothness = false;
};

// Evaluates the weighted loss on a traced batch, holding the traced points
// fixed and differentiating the last refinement step, normals, features, the
// r_d-Laplacian, the eikonal term and the mask term. Throws NonFinite.
template <typename T>
ObjectiveResult<T> loss_total(const FieldModel<T>& model, const TracedBatch& batch, const ObjectiveOptions& opts);

// Radiance at traced surface points through the same refine, normal and
// feature path the loss uses. Colors are raw (unclamped).
struct ShadedPoints {
  std::vector<Vec3> x;    // refined points x_n
  std::vector<Vec3> rgb;
};
ShadedPoints shade_surface(const FieldModel<float>& model, std::span<const Vec3> x_hat, std::span<const Vec3> dirs,
                           double denom_clamp);

}  // namespace nlr
