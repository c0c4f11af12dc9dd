#include "nlr/tracer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nlr/errors.hpp"

namespace nlr {
namespace {

constexpr std::size_t kScanRayChunk = 512;
constexpr int kGoldenIterations = 14;

// Evaluates f at the given points, reusing the buffers.
void eval(const SignedDistance& f, const std::vector<Vec3>& pts, std::vector<double>& out) {
  out.resize(pts.size());
  f.evaluate(pts, out);
}

}  // namespace

void TraceConfig::validate() const {
  if (n_steps < 1 || scan_samples < 2 || section_steps < 0 || converge_eps <= 0 || accept_eps <= 0 ||
      denom_clamp <= 0 || domain_radius <= 0) {
    throw InvalidArgument("tracer: trace configuration values must be positive");
  }
  if (converge_eps >= accept_eps) throw InvalidArgument("tracer: converge_eps must be below accept_eps");
}

double clamp_denominator(double d, double min_abs) {
  if (std::abs(d) >= min_abs) return d;
  return d > 0 ? min_abs : -min_abs;
}

std::optional<Interval> domain_interval(const Ray& ray, double radius) {
  auto iv = intersect_unit_sphere(ray, radius);
  if (!iv || iv->t_far <= 0) return std::nullopt;
  iv->t_near = std::max(iv->t_near, 0.0);
  return iv;
}

std::vector<ForwardTrace> trace_forward(const SignedDistance& f, std::span<const Ray> rays, const TraceConfig& cfg) {
  cfg.validate();
  std::vector<ForwardTrace> out(rays.size());
  std::vector<std::size_t> active;
  std::vector<double> t_start(rays.size()), t_end(rays.size());
  for (std::size_t i = 0; i < rays.size(); ++i) {
    const auto iv = domain_interval(rays[i], cfg.domain_radius);
    if (!iv) continue;
    out[i].entered = true;
    out[i].t = iv->t_near;
    out[i].x = rays[i].at(iv->t_near);
    out[i].f_min = std::numeric_limits<double>::infinity();
    t_start[i] = iv->t_near;
    t_end[i] = iv->t_far;
    active.push_back(i);
  }

  std::vector<Vec3> pts;
  std::vector<double> vals;
  for (int step = 0; step <= cfg.n_steps && !active.empty(); ++step) {
    pts.resize(active.size());
    for (std::size_t k = 0; k < active.size(); ++k) pts[k] = out[active[k]].x;
    eval(f, pts, vals);
    std::size_t keep = 0;
    for (std::size_t k = 0; k < active.size(); ++k) {
      const std::size_t i = active[k];
      auto& tr = out[i];
      tr.f = vals[k];
      tr.f_min = std::min(tr.f_min, vals[k]);
      if (std::abs(vals[k]) < cfg.converge_eps) {
        tr.converged = true;
        continue;
      }
      if (step == cfg.n_steps) continue;
      const double t_next = std::max(tr.t + vals[k], t_start[i]);
      if (t_next > t_end[i]) continue;  // left the domain without converging
      tr.t = t_next;
      tr.x = rays[i].at(t_next);
      active[keep++] = i;
    }
    active.resize(keep);
  }
  return out;
}

ForwardTrace trace_forward(const SignedDistance& f, const Ray& ray, const TraceConfig& cfg) {
  return trace_forward(f, std::span<const Ray>(&ray, 1), cfg).front();
}

std::vector<SurfaceHit> trace_bidirectional(const SignedDistance& f, std::span<const Ray> rays,
                                            const TraceConfig& cfg, bool with_normals) {
  const auto fwd = trace_forward(f, rays, cfg);
  std::vector<SurfaceHit> hits(rays.size());

  // Backward trace from the far domain boundary for unconverged rays.
  std::vector<std::size_t> pending;
  std::vector<double> t_far(rays.size(), 0.0);
  for (std::size_t i = 0; i < rays.size(); ++i) {
    if (!fwd[i].entered) continue;
    if (fwd[i].converged) {
      hits[i].x = fwd[i].x;
      hits[i].t = fwd[i].t;
      hits[i].residual = std::abs(fwd[i].f);
      hits[i].status = HitStatus::Converged;
      continue;
    }
    t_far[i] = domain_interval(rays[i], cfg.domain_radius)->t_far;
    pending.push_back(i);
  }

  std::vector<Vec3> pts;
  std::vector<double> vals;
  {
    std::vector<std::size_t> active = pending;
    for (int step = 0; step <= cfg.n_steps && !active.empty(); ++step) {
      pts.resize(active.size());
      for (std::size_t k = 0; k < active.size(); ++k) pts[k] = rays[active[k]].at(t_far[active[k]]);
      eval(f, pts, vals);
      std::size_t keep = 0;
      for (std::size_t k = 0; k < active.size(); ++k) {
        const std::size_t i = active[k];
        if (std::abs(vals[k]) < cfg.converge_eps || step == cfg.n_steps) continue;
        t_far[i] -= vals[k];
        if (t_far[i] < fwd[i].t) continue;  // passed the near bound: no surface
        active[keep++] = i;
      }
      active.resize(keep);
    }
  }

  // Rays whose far bound is still behind the near bound get a scan.
  std::vector<std::size_t> bracketed;
  for (std::size_t i : pending) {
    if (t_far[i] >= fwd[i].t) bracketed.push_back(i);
  }

  const int S = cfg.scan_samples;
  for (std::size_t begin = 0; begin < bracketed.size(); begin += kScanRayChunk) {
    const std::size_t end = std::min(bracketed.size(), begin + kScanRayChunk);
    const std::size_t n = end - begin;
    pts.resize(n * S);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t i = bracketed[begin + k];
      const double t0 = fwd[i].t, t1 = t_far[i];
      for (int s = 0; s < S; ++s) pts[k * S + s] = rays[i].at(t0 + (t1 - t0) * s / (S - 1));
    }
    eval(f, pts, vals);

    std::vector<std::size_t> crossing;  // index into this chunk
    std::vector<double> lo, hi, f_lo, f_hi;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t i = bracketed[begin + k];
      const double t0 = fwd[i].t, t1 = t_far[i];
      for (int s = 0; s + 1 < S; ++s) {
        const double a = vals[k * S + s], b = vals[k * S + s + 1];
        if (a >= 0 && b < 0) {
          crossing.push_back(k);
          lo.push_back(t0 + (t1 - t0) * s / (S - 1));
          hi.push_back(t0 + (t1 - t0) * (s + 1) / (S - 1));
          f_lo.push_back(a);
          f_hi.push_back(b);
          break;
        }
      }
    }

    // Bisection on the sign of f.
    std::vector<Vec3> mid_pts(crossing.size());
    std::vector<double> mid_vals;
    for (int step = 0; step < cfg.section_steps && !crossing.empty(); ++step) {
      for (std::size_t c = 0; c < crossing.size(); ++c) {
        mid_pts[c] = rays[bracketed[begin + crossing[c]]].at(0.5 * (lo[c] + hi[c]));
      }
      eval(f, mid_pts, mid_vals);
      for (std::size_t c = 0; c < crossing.size(); ++c) {
        const double mid = 0.5 * (lo[c] + hi[c]);
        if (mid_vals[c] >= 0) {
          lo[c] = mid;
          f_lo[c] = mid_vals[c];
        } else {
          hi[c] = mid;
          f_hi[c] = mid_vals[c];
        }
      }
    }

    // Final point: linear interpolation inside the last bracket.
    std::vector<double> t_hit(crossing.size());
    for (std::size_t c = 0; c < crossing.size(); ++c) {
      const double denom = f_lo[c] - f_hi[c];
      const double w = denom > 0 ? f_lo[c] / denom : 0.5;
      t_hit[c] = lo[c] + std::clamp(w, 0.0, 1.0) * (hi[c] - lo[c]);
      mid_pts[c] = rays[bracketed[begin + crossing[c]]].at(t_hit[c]);
    }
    eval(f, mid_pts, mid_vals);
    for (std::size_t c = 0; c < crossing.size(); ++c) {
      if (!(std::abs(mid_vals[c]) < cfg.accept_eps)) continue;
      auto& h = hits[bracketed[begin + crossing[c]]];
      h.x = mid_pts[c];
      h.t = t_hit[c];
      h.residual = std::abs(mid_vals[c]);
      h.status = HitStatus::Refined;
    }
  }

  if (with_normals) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < hits.size(); ++i) {
      if (hits[i].hit()) idx.push_back(i);
    }
    pts.resize(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) pts[k] = hits[idx[k]].x;
    std::vector<Vec3> grads(idx.size());
    f.gradient(pts, grads);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const double len = grads[k].norm();
      hits[idx[k]].n = len > 0 ? Vec3(grads[k] / len) : Vec3::Zero();
    }
  }
  return hits;
}

SurfaceHit trace_bidirectional(const SignedDistance& f, const Ray& ray, const TraceConfig& cfg) {
  return trace_bidirectional(f, std::span<const Ray>(&ray, 1), cfg).front();
}

std::vector<MinSdf> min_sdf_along_ray(const SignedDistance& f, std::span<const Ray> rays, const TraceConfig& cfg) {
  cfg.validate();
  const int S = cfg.scan_samples;
  std::vector<MinSdf> out(rays.size());
  std::vector<std::size_t> inside;
  std::vector<Interval> ivs(rays.size());
  for (std::size_t i = 0; i < rays.size(); ++i) {
    const auto iv = domain_interval(rays[i], cfg.domain_radius);
    if (!iv) {
      out[i].f_min = std::numeric_limits<double>::infinity();
      continue;
    }
    ivs[i] = *iv;
    inside.push_back(i);
  }

  std::vector<Vec3> pts;
  std::vector<double> vals;
  std::vector<Vec3> refine_pts;
  std::vector<double> refine_vals;
  for (std::size_t begin = 0; begin < inside.size(); begin += kScanRayChunk) {
    const std::size_t end = std::min(inside.size(), begin + kScanRayChunk);
    const std::size_t n = end - begin;
    pts.resize(n * S);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t i = inside[begin + k];
      for (int s = 0; s < S; ++s) {
        pts[k * S + s] = rays[i].at(ivs[i].t_near + (ivs[i].t_far - ivs[i].t_near) * s / (S - 1));
      }
    }
    eval(f, pts, vals);
    // Golden-section search on [t_{s-1}, t_{s+1}] around the best sample.
    // Unlike a parabolic step it copes with kinked minima.
    constexpr double kInvPhi = 0.6180339887498949;
    std::vector<double> lo(n), hi(n), ta(n), tb(n), fa(n), fb(n);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t i = inside[begin + k];
      const double dt = (ivs[i].t_far - ivs[i].t_near) / (S - 1);
      const double* v = vals.data() + k * S;
      const int s = static_cast<int>(std::min_element(v, v + S) - v);
      out[i].valid = true;
      out[i].f_min = v[s];
      out[i].t_argmin = ivs[i].t_near + dt * s;
      lo[k] = ivs[i].t_near + dt * std::max(s - 1, 0);
      hi[k] = ivs[i].t_near + dt * std::min(s + 1, S - 1);
      ta[k] = hi[k] - kInvPhi * (hi[k] - lo[k]);
      tb[k] = lo[k] + kInvPhi * (hi[k] - lo[k]);
    }
    refine_pts.resize(2 * n);
    for (std::size_t k = 0; k < n; ++k) {
      const Ray& r = rays[inside[begin + k]];
      refine_pts[2 * k] = r.at(ta[k]);
      refine_pts[2 * k + 1] = r.at(tb[k]);
    }
    eval(f, refine_pts, refine_vals);
    for (std::size_t k = 0; k < n; ++k) {
      fa[k] = refine_vals[2 * k];
      fb[k] = refine_vals[2 * k + 1];
    }
    refine_pts.resize(n);
    std::vector<double> tnew(n);
    for (int it = 0; it < kGoldenIterations; ++it) {
      for (std::size_t k = 0; k < n; ++k) {
        if (fa[k] < fb[k]) {
          hi[k] = tb[k];
          tb[k] = ta[k];
          fb[k] = fa[k];
          tnew[k] = ta[k] = hi[k] - kInvPhi * (hi[k] - lo[k]);
        } else {
          lo[k] = ta[k];
          ta[k] = tb[k];
          fa[k] = fb[k];
          tnew[k] = tb[k] = lo[k] + kInvPhi * (hi[k] - lo[k]);
        }
        refine_pts[k] = rays[inside[begin + k]].at(tnew[k]);
      }
      eval(f, refine_pts, refine_vals);
      for (std::size_t k = 0; k < n; ++k) {
        if (tnew[k] == ta[k]) fa[k] = refine_vals[k];
        else fb[k] = refine_vals[k];
      }
    }
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t i = inside[begin + k];
      const bool a = fa[k] < fb[k];
      const double fv = a ? fa[k] : fb[k];
      if (fv < out[i].f_min) {
        out[i].f_min = fv;
        out[i].t_argmin = a ? ta[k] : tb[k];
      }
    }
  }
  return out;
}

MinSdf min_sdf_along_ray(const SignedDistance& f, const Ray& ray, const TraceConfig& cfg) {
  return min_sdf_along_ray(f, std::span<const Ray>(&ray, 1), cfg).front();
}

Vec3 differentiable_refine(const SignedDistance& f, const Vec3& x_hat, const Ray& ray, const TraceConfig& cfg) {
  const double fx = f.value(x_hat);
  if (!(std::abs(fx) < cfg.accept_eps)) {
    throw InvalidArgument("tracer: refinement needs |f| below accept_eps");
  }
  const Vec3 g = f.gradient_at(x_hat);
  if (g.norm() < 1e-8) throw DegenerateNormal("tracer: vanishing SDF gradient at refinement point");
  const double denom = clamp_denominator(g.dot(ray.dir), cfg.denom_clamp);
  return x_hat - (fx / denom) * ray.dir;
}

}  // namespace nlr
