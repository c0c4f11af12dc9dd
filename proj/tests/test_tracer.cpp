#include <cmath>
#include <random>

#include "doctest.h"
#include "nlr/tracer.hpp"
#include "test_util.hpp"
#include "trace_oracle.hpp"

using namespace nlr;
using namespace nlr::testing;

namespace {

const TraceConfig kCfg{};

// First intersection of a ray with a centered sphere, closed form.
std::optional<double> sphere_hit(const Ray& r, double radius) {
  const auto iv = intersect_unit_sphere(r, radius);
  if (!iv) return std::nullopt;
  return iv->t_near;
}

}  // namespace

TEST_CASE("trace_forward: head-on sphere hit") {
  const SphereSdf sphere(0.5);
  const auto tr = trace_forward(sphere, Ray{Vec3(0, 0, 2), Vec3(0, 0, -1)}, kCfg);
  CHECK(tr.converged);
  CHECK((tr.x - Vec3(0, 0, 0.5)).norm() < 1e-4);
  CHECK(tr.t == doctest::Approx(1.5).epsilon(1e-4));
}

TEST_CASE("trace_forward: parallel miss keeps distance") {
  const SphereSdf sphere(0.5);
  const auto tr = trace_forward(sphere, Ray{Vec3(0.6, 0, 2), Vec3(0, 0, -1)}, kCfg);
  CHECK_FALSE(tr.converged);
  CHECK(tr.f_min == doctest::Approx(0.1).epsilon(1e-2));
}

TEST_CASE("trace_forward: grazing ray stalls") {
  const SphereSdf sphere(0.5);
  const Ray r{Vec3(0.49, 0, 2), Vec3(0, 0, -1)};
  CHECK(dense_first_hit(sphere, r).has_value());
  CHECK_FALSE(trace_forward(sphere, r, kCfg).converged);
}

TEST_CASE("trace_forward: never crosses an exact SDF before the last step") {
  const SphereSdf sphere(0.5);
  const TorusSdf torus(0.45, 0.2);
  const BoxSdf box(Vec3(0.4, 0.3, 0.5));
  const SignedDistance* shapes[] = {&sphere, &torus, &box};
  std::mt19937_64 rng(1);
  for (const auto* f : shapes) {
    for (int i = 0; i < 300; ++i) {
      const Ray r = random_ray(rng);
      const auto iv = domain_interval(r, 1.0);
      if (!iv) continue;
      double t = iv->t_near;
      double prev = f->value(r.at(t));
      for (int k = 0; k < kCfg.n_steps && std::abs(prev) >= kCfg.converge_eps; ++k) {
        t += prev;
        if (t > iv->t_far) break;
        const double cur = f->value(r.at(t));
        CHECK(cur >= -1e-12);
        prev = cur;
      }
    }
  }
}

TEST_CASE("trace_bidirectional: grazing ray is recovered") {
  const SphereSdf sphere(0.5);
  const Ray r{Vec3(0.49, 0, 2), Vec3(0, 0, -1)};
  const auto hit = trace_bidirectional(sphere, r, kCfg);
  REQUIRE(hit.hit());
  CHECK(hit.residual < 5e-3);
  CHECK(std::abs(hit.t - *sphere_hit(r, 0.5)) < 1e-3);
  CHECK(std::abs(hit.n.norm() - 1.0) < 1e-9);
}

TEST_CASE("trace_bidirectional: miss") {
  const SphereSdf sphere(0.5);
  CHECK_FALSE(trace_bidirectional(sphere, Ray{Vec3(0.6, 0, 2), Vec3(0, 0, -1)}, kCfg).hit());
  CHECK_FALSE(trace_bidirectional(sphere, Ray{Vec3(0, 3, 2), Vec3(0, 0, -1)}, kCfg).hit());
}

TEST_CASE("trace_bidirectional: random torus rays match the dense oracle") {
  const TorusSdf torus(0.45, 0.2);
  std::mt19937_64 rng(2);
  int checked = 0;
  double worst = 0;
  while (checked < 1000) {
    const Ray r = random_ray(rng, 2.5, 0.6);
    const auto ref = dense_first_hit(torus, r);
    if (!ref) continue;
    const auto hit = trace_bidirectional(torus, r, kCfg);
    REQUIRE(hit.hit());
    worst = std::max(worst, std::abs(hit.t - *ref));
    ++checked;
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("trace_bidirectional: batch equals single-ray results and is deterministic") {
  const BoxSdf box(Vec3(0.4, 0.3, 0.5));
  std::mt19937_64 rng(3);
  std::vector<Ray> rays;
  for (int i = 0; i < 200; ++i) rays.push_back(random_ray(rng));
  const auto a = trace_bidirectional(box, rays, kCfg);
  const auto b = trace_bidirectional(box, rays, kCfg);
  for (std::size_t i = 0; i < rays.size(); ++i) {
    const auto single = trace_bidirectional(box, rays[i], kCfg);
    CHECK(a[i].status == single.status);
    CHECK(a[i].t == single.t);
    CHECK(a[i].t == b[i].t);
  }
}

TEST_CASE("min_sdf_along_ray") {
  const SphereSdf sphere(0.5);
  SUBCASE("passing ray") {
    const auto m = min_sdf_along_ray(sphere, Ray{Vec3(0.7, 0, 2), Vec3(0, 0, -1)}, kCfg);
    CHECK(m.valid);
    CHECK(std::abs(m.f_min - 0.2) < 1e-3);
    CHECK(std::abs(m.t_argmin - 2.0) < 0.02);
  }
  SUBCASE("hitting ray is negative inside") {
    CHECK(min_sdf_along_ray(sphere, Ray{Vec3(0.1, 0, 2), Vec3(0, 0, -1)}, kCfg).f_min < 0);
  }
  SUBCASE("outside the domain") {
    CHECK_FALSE(min_sdf_along_ray(sphere, Ray{Vec3(0, 3, 2), Vec3(0, 0, -1)}, kCfg).valid);
  }
  SUBCASE("random rays vs brute force") {
    const TorusSdf torus(0.45, 0.2);
    const BoxSdf box(Vec3(0.4, 0.3, 0.5));
    const SignedDistance* shapes[] = {&sphere, &torus, &box};
    std::mt19937_64 rng(4);
    double worst = 0;
    for (const auto* f : shapes) {
      for (int i = 0; i < 100; ++i) {
        const Ray r = random_ray(rng);
        const auto m = min_sdf_along_ray(*f, r, kCfg);
        if (!m.valid) continue;
        worst = std::max(worst, std::abs(m.f_min - dense_min(*f, r)));
      }
    }
    CHECK(worst < 1e-3);
  }
}

TEST_CASE("differentiable_refine") {
  const SphereSdf sphere(0.5);
  const Ray r{Vec3(0, 0, 2), Vec3(0, 0, -1)};
  SUBCASE("zero residual leaves the point unchanged") {
    CHECK((differentiable_refine(sphere, Vec3(0, 0, 0.5), r, kCfg) - Vec3(0, 0, 0.5)).norm() == 0.0);
  }
  SUBCASE("off-surface point lands on the surface") {
    const Vec3 x = differentiable_refine(sphere, Vec3(0, 0, 0.503), r, kCfg);
    CHECK(std::abs(x.norm() - 0.5) < 1e-6);
    const Ray slanted{Vec3(0.3, 0.1, 2), Vec3(-0.05, 0.02, -1).normalized()};
    const double t = *sphere_hit(slanted, 0.5);
    const Vec3 y = differentiable_refine(sphere, slanted.at(t - 0.001), slanted, kCfg);
    CHECK(std::abs(y.norm() - 0.5) < 1e-6);
  }
  SUBCASE("denominator clamp") {
    CHECK(clamp_denominator(0.001, 0.01) == 0.01);
    CHECK(clamp_denominator(-0.001, 0.01) == -0.01);
    CHECK(clamp_denominator(-0.5, 0.01) == -0.5);
  }
  SUBCASE("degenerate gradient") {
    const SphereSdf flat(0.5, 1e-12);
    CHECK_THROWS_AS(differentiable_refine(flat, Vec3(0, 0, 0.5), r, kCfg), DegenerateNormal);
  }
}

TEST_CASE("trace config validation") {
  TraceConfig cfg;
  cfg.converge_eps = 0.01;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = TraceConfig{};
  cfg.scan_samples = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
}
