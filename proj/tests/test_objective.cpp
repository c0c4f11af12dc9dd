#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "fd_oracle.hpp"
#include "nlr/objective.hpp"
#include "test_util.hpp"

using namespace nlr;
using namespace nlr::testing;

namespace {

// Tiny model whose SDF roughly matches a radius 0.5 sphere, so that traced
// batches contain both hits and misses.
FieldModel<float> tiny_sphere_model(std::uint64_t seed) {
  FieldConfig cfg;
  cfg.sdf_width = 16;
  cfg.sdf_hidden_layers = 2;
  cfg.radiance_width = 16;
  cfg.radiance_hidden_layers = 2;
  cfg.fourier_k_max = 2;
  auto model = make_fields(cfg, seed);
  PretrainOptions po;
  po.steps = 400;
  po.batch = 256;
  po.lr = 1e-3;
  po.seed = seed;
  pretrain_sphere(model.sdf, po);
  return model;
}

std::vector<RaySample> random_samples(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<RaySample> out;
  for (int i = 0; i < n; ++i) {
    RaySample s;
    s.ray = random_ray(rng, 2.5, 0.8);
    s.rgb = Vec3(u(rng), u(rng), u(rng));
    s.mask = intersect_unit_sphere(s.ray, 0.5).has_value();
    // A few deliberately wrong mask bits exercise both mask classes.
    if (i % 7 == 3) s.mask = !s.mask;
    out.push_back(s);
  }
  return out;
}

double naive_bce_term(double f, double m, double alpha) {
  double p = 1.0 / (1.0 + std::exp(alpha * f));
  p = std::min(std::max(p, 1e-7), 1.0 - 1e-7);
  return -(m * std::log(p) + (1 - m) * std::log(1 - p));
}

}  // namespace

TEST_CASE("loss_reconstruction basics") {
  const std::vector<Vec3> a{Vec3(0.1, 0.2, 0.3), Vec3(0.5, 0.5, 0.5)};
  CHECK(loss_reconstruction(a, a, 2) == 0.0);
  std::vector<Vec3> b = a;
  b[0].x() += 0.3;
  CHECK(loss_reconstruction(a, b, 10) == doctest::Approx(0.03).epsilon(1e-12));
  CHECK_THROWS_AS(loss_reconstruction(a, std::vector<Vec3>(1), 2), DimensionMismatch);
}

TEST_CASE("loss_reconstruction vs scalar loop") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<Vec3> p(500), t(500);
  for (auto& v : p) v = Vec3(u(rng), u(rng), u(rng));
  for (auto& v : t) v = Vec3(u(rng), u(rng), u(rng));
  double ref = 0;
  for (std::size_t i = 0; i < p.size(); ++i)
    for (int c = 0; c < 3; ++c) ref += std::fabs(p[i][c] - t[i][c]);
  ref /= 2048.0;
  CHECK(std::abs(loss_reconstruction(p, t, 2048) - ref) < 1e-7);
}

TEST_CASE("loss_eikonal on analytic fields") {
  std::mt19937_64 rng(1);
  CHECK(loss_eikonal(SphereSdf(0.5), 4096, rng) < 1e-10);
  CHECK(loss_eikonal(SphereSdf(0.5, 2.0), 4096, rng) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK_THROWS_AS(loss_eikonal(SphereSdf(0.5), 0, rng), InvalidArgument);
}

TEST_CASE("loss_mask examples") {
  const double alpha = 50;
  std::vector<double> far{1e6}, zero{0.0}, m0{0.0};
  CHECK(loss_mask(far, m0, alpha, 1) < 1e-8);
  CHECK(loss_mask(zero, m0, alpha, 8) == doctest::Approx(std::numbers::ln2 / (alpha * 8)).epsilon(1e-12));
  CHECK(loss_mask_derivative(1e6, 0.0, alpha, 4) == 0.0);  // clamped region
  CHECK(loss_mask_derivative(0.0, 1.0, alpha, 4) == doctest::Approx(0.125));
}

TEST_CASE("loss_mask vs scalar loop and finite differences") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  std::bernoulli_distribution coin(0.5);
  std::vector<double> f(300), m(300);
  for (auto& v : f) v = u(rng);
  for (auto& v : m) v = coin(rng) ? 1.0 : 0.0;
  double ref = 0;
  for (std::size_t i = 0; i < f.size(); ++i) ref += naive_bce_term(f[i], m[i], 30.0);
  ref /= 30.0 * 1000;
  CHECK(std::abs(loss_mask(f, m, 30.0, 1000) - ref) < 1e-6);
  for (int i = 0; i < 10; ++i) {
    auto one = [&](double v) { return naive_bce_term(v, m[i], 30.0) / (30.0 * 1000); };
    CHECK(std::abs(loss_mask_derivative(f[i], m[i], 30.0, 1000) - diff1(one, f[i], 1e-5)) < 1e-8);
  }
}

TEST_CASE("combine_losses") {
  const LossWeights w;
  CHECK(combine_losses(0, 0, 0, 0, w).total == 0.0);
  CHECK(combine_losses(1, 1, 1, 1, w).total == doctest::Approx(101.11).epsilon(1e-12));
  CHECK_THROWS_AS(combine_losses(std::nan(""), 0, 0, 0, w), NonFinite);
  LossWeights bad;
  bad.w_E = -1;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}

TEST_CASE("loss_smoothness is zero when radiance ignores the direction") {
  auto model = tiny_sphere_model(2).cast<double>();
  auto& W = model.radiance.layers()[0].weight;
  W.middleCols(FieldModel<double>::kDir, model.normal_offset() - FieldModel<double>::kDir).setZero();
  std::mt19937_64 rng(4);
  std::vector<Vec3> x, d;
  for (int i = 0; i < 20; ++i) {
    x.push_back(random_unit(rng) * 0.5);
    d.push_back(random_unit(rng));
  }
  CHECK(loss_smoothness(model, x, d, 20) == 0.0);
}

TEST_CASE("loss_smoothness vs second differences") {
  auto model = tiny_sphere_model(5).cast<double>();
  std::mt19937_64 rng(6);
  std::vector<Vec3> x, d;
  for (int i = 0; i < 12; ++i) {
    x.push_back(random_unit(rng) * 0.5);
    d.push_back(random_unit(rng));
  }
  double ref = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    // Normal and feature depend only on x, so they stay fixed while r_d moves.
    const Mat<double> xi = x[i];
    Mat<double> tap;
    evaluate(model.sdf, xi, &tap);
    Vec3 g;
    for (int j = 0; j < 3; ++j) {
      auto fj = [&](double v) {
        std::vector<double> p{x[i].x(), x[i].y(), x[i].z()};
        p[j] = v;
        return naive_forward(model.sdf, p)[0];
      };
      g[j] = diff1(fj, x[i][j], 1e-4);
    }
    const Mat<double> nn = g.normalized();
    Vec3 lap = Vec3::Zero();
    for (int axis = 0; axis < 3; ++axis) {
      for (int ch = 0; ch < 3; ++ch) {
        auto b = [&](double v) {
          Vec3 dd = d[i];
          dd[axis] = v;
          const Mat<double> in = model.radiance_input(xi, Mat<double>(dd), nn, tap);
          std::vector<double> iv(in.data(), in.data() + in.size());
          return naive_forward(model.radiance, iv)[ch];
        };
        lap[ch] += diff2(b, d[i][axis], 1e-3);
      }
    }
    ref += lap.squaredNorm();
  }
  ref /= 40.0;
  const double got = loss_smoothness(model, x, d, 40);
  CHECK(ref > 0);
  CHECK(std::abs(got - ref) / ref < 1e-3);
}

TEST_CASE("trace_batch splits foreground and mask sets") {
  auto model = tiny_sphere_model(8);
  const NeuralSdf f(model.sdf);
  std::mt19937_64 rng(8);
  const auto b = trace_batch(f, random_samples(rng, 200), TraceConfig{}, 64, rng);
  CHECK(b.foreground.size() + b.background.size() == 200);
  CHECK(b.foreground.size() > 20);
  CHECK(b.background.size() > 20);
  CHECK(b.eikonal_points.size() == 64);
  for (std::size_t k = 0; k < b.foreground.size(); ++k) {
    CHECK(b.samples[b.foreground[k]].mask);
    CHECK(std::abs(f.value(b.x_hat[k])) < TraceConfig{}.accept_eps);
  }
}

TEST_CASE("loss_total terms match per-ray recomputation") {
  auto fmodel = tiny_sphere_model(10);
  const NeuralSdf f(fmodel.sdf);
  std::mt19937_64 rng(10);
  const auto b = trace_batch(f, random_samples(rng, 150), TraceConfig{}, 100, rng);
  const auto model = fmodel.cast<double>();
  ObjectiveOptions opts;
  opts.want_gradient = false;
  const auto res = loss_total(model, b, opts);
  const double U = 150;

  double LR = 0, LM = 0, LE = 0;
  for (std::size_t k = 0; k < b.foreground.size(); ++k) {
    const auto& s = b.samples[b.foreground[k]];
    const Vec3 xh = b.x_hat[k];
    const Mat<double> g0 = input_gradient(model.sdf, VecX<double>(xh));
    const double fh = naive_forward(model.sdf, {xh.x(), xh.y(), xh.z()})[0];
    double den = g0.row(0).dot(s.ray.dir.transpose());
    if (std::abs(den) < 0.01) den = den > 0 ? 0.01 : -0.01;
    const Vec3 xn = xh - fh / den * s.ray.dir;
    const Mat<double> g = input_gradient(model.sdf, VecX<double>(xn)).transpose();
    Mat<double> tap;
    evaluate(model.sdf, Mat<double>(xn), &tap);
    const Mat<double> in = model.radiance_input(Mat<double>(xn), Mat<double>(s.ray.dir), Mat<double>(g.normalized()), tap);
    const auto B = naive_forward(model.radiance, std::vector<double>(in.data(), in.data() + in.size()));
    for (int c = 0; c < 3; ++c) LR += std::fabs(B[c] - s.rgb[c]);
  }
  for (std::size_t k = 0; k < b.background.size(); ++k) {
    const Vec3 x = b.x_min[k];
    LM += naive_bce_term(naive_forward(model.sdf, {x.x(), x.y(), x.z()})[0],
                         b.samples[b.background[k]].mask ? 1.0 : 0.0, 50.0);
  }
  for (const auto& x : b.eikonal_points) {
    Vec3 g;
    for (int j = 0; j < 3; ++j) {
      auto fj = [&](double v) {
        std::vector<double> p{x.x(), x.y(), x.z()};
        p[j] = v;
        return naive_forward(model.sdf, p)[0];
      };
      g[j] = diff1(fj, x[j], 1e-4);
    }
    LE += (g.norm() - 1) * (g.norm() - 1);
  }
  CHECK(std::abs(res.terms.L_R - LR / U) < 1e-6);
  CHECK(std::abs(res.terms.L_M - LM / (50.0 * U)) < 1e-6);
  CHECK(std::abs(res.terms.L_E - LE / 100.0) < 1e-6);
  CHECK(res.terms.L_S > 0);
  CHECK(res.terms.total == doctest::Approx(res.terms.L_R + 0.1 * res.terms.L_E + 100 * res.terms.L_M +
                                           0.01 * res.terms.L_S));
}

TEST_CASE("loss_total gradient vs finite differences") {
  auto fmodel = tiny_sphere_model(12);
  const NeuralSdf f(fmodel.sdf);
  std::mt19937_64 rng(12);
  const auto b = trace_batch(f, random_samples(rng, 64), TraceConfig{}, 32, rng);
  REQUIRE(b.foreground.size() > 5);
  auto model = fmodel.cast<double>();
  ObjectiveOptions opts;
  const auto res = loss_total(model, b, opts);
  const auto params = model.parameters();
  const std::size_t ns = model.sdf.parameter_count();

  opts.want_gradient = false;
  auto total_at = [&](std::size_t idx, double v) {
    auto p = params;
    p[idx] = v;
    auto m = model;
    m.set_parameters(p);
    return loss_total(m, b, opts).terms.total;
  };
  for (int group = 0; group < 2; ++group) {
    std::uniform_int_distribution<std::size_t> pick(group == 0 ? 0 : ns,
                                                    group == 0 ? ns - 1 : params.size() - 1);
    std::vector<double> got, ref;
    for (int trial = 0; trial < 10; ++trial) {
      const std::size_t idx = pick(rng);
      got.push_back(res.gradient[idx]);
      ref.push_back(diff1([&](double v) { return total_at(idx, v); }, params[idx], 1e-6));
    }
    CAPTURE(group);
    CHECK(rel_error(got, ref) < 1e-3);
  }
}

TEST_CASE("loss_total gradient flows to the SDF through the radiance term") {
  auto fmodel = tiny_sphere_model(14);
  const NeuralSdf f(fmodel.sdf);
  std::mt19937_64 rng(14);
  auto samples = random_samples(rng, 64);
  for (auto& s : samples) s.mask = intersect_unit_sphere(s.ray, 0.5).has_value();
  auto b = trace_batch(f, samples, TraceConfig{}, 1, rng);
  // Only foreground rays: drop the mask set and the single eikonal sample's
  // weight.
  b.background.clear();
  b.x_min.clear();
  ObjectiveOptions opts;
  opts.weights.w_E = 0;
  opts.weights.w_S = 0;
  const auto res = loss_total(fmodel.cast<double>(), b, opts);
  double sdf_norm = 0;
  for (std::size_t i = 0; i < fmodel.sdf.parameter_count(); ++i) sdf_norm += res.gradient[i] * res.gradient[i];
  CHECK(sdf_norm > 0);
}

TEST_CASE("loss_total is deterministic and matches between precisions") {
  auto fmodel = tiny_sphere_model(16);
  const NeuralSdf f(fmodel.sdf);
  std::mt19937_64 rng(16);
  const auto b = trace_batch(f, random_samples(rng, 700), TraceConfig{}, 700, rng);
  ObjectiveOptions opts;
  const auto a1 = loss_total(fmodel, b, opts);
  const auto a2 = loss_total(fmodel, b, opts);
  CHECK(a1.gradient == a2.gradient);
  CHECK(a1.terms.total == a2.terms.total);
  const auto d = loss_total(fmodel.cast<double>(), b, opts);
  CHECK(a1.terms.total == doctest::Approx(d.terms.total).epsilon(1e-3));
}
