#include <cmath>
#include <random>

#include "doctest.h"
#include "fd_oracle.hpp"
#include "nlr/fields.hpp"
#include "nlr/sdf.hpp"

using namespace nlr;
using namespace nlr::testing;

namespace {

double eval_scalar(const FieldNetwork<double>& net, const std::vector<double>& x, int out = 0) {
  return naive_forward(net, x)[out];
}

}  // namespace

TEST_CASE("forward: zero network gives zero") {
  FieldNetwork<double> net({3, 16, 16, 2}, Activation::Sine);
  const auto y = evaluate(net, Mat<double>(Mat<double>::Random(3, 5)));
  CHECK(y.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("forward: single linear identity layer") {
  FieldNetwork<double> net({4, 4}, Activation::Sine);
  net.layers()[0].weight.setIdentity();
  const Mat<double> x = Mat<double>::Random(4, 3);
  CHECK((evaluate(net, x) - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("forward: matches the naive evaluator") {
  std::mt19937_64 rng(11);
  FieldNetwork<double> net({3, 64, 64, 64, 64, 1}, Activation::Sine);
  init_siren(net, 5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = random_input(rng, 3);
    const double got = evaluate(net, Mat<double>(to_vec(x)))(0, 0);
    const double ref = naive_forward(net, x)[0];
    CHECK(std::abs(got - ref) <= 1e-12 * std::max(1.0, std::abs(ref)));
  }
}

TEST_CASE("forward: dimension mismatch") {
  FieldNetwork<double> net({3, 8, 1}, Activation::Sine);
  CHECK_THROWS_AS(evaluate(net, Mat<double>(Mat<double>::Zero(4, 1))), DimensionMismatch);
  CHECK_THROWS_AS(input_gradient(net, VecX<double>(VecX<double>::Zero(2))), DimensionMismatch);
  CHECK_THROWS_AS(param_gradients(net, VecX<double>(VecX<double>::Zero(3)), VecX<double>(VecX<double>::Zero(2))),
                  DimensionMismatch);
}

TEST_CASE("input_gradient: linear layer Jacobian is W") {
  FieldNetwork<double> net({3, 2}, Activation::Sine);
  net.layers()[0].weight << 1, 2, 3, 4, 5, 6;
  const auto J = input_gradient(net, VecX<double>(VecX<double>::Random(3)));
  CHECK((J - net.layers()[0].weight).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("input_gradient: matches central differences") {
  std::mt19937_64 rng(21);
  double worst = 0;
  for (int trial = 0; trial < 25; ++trial) {
    const auto net = random_sine_net(rng, 4, 2);
    const auto x = random_input(rng, 4);
    const auto J = input_gradient(net, to_vec(x));
    std::vector<double> got, ref;
    for (int o = 0; o < 2; ++o) {
      for (int j = 0; j < 4; ++j) {
        got.push_back(J(o, j));
        ref.push_back(diff1(
            [&](double v) {
              auto xx = x;
              xx[j] = v;
              return eval_scalar(net, xx, o);
            },
            x[j], 1e-3));
      }
    }
    worst = std::max(worst, rel_error(got, ref));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("param_gradients: single layer quadratic loss") {
  // L = 0.5 |W x + b - y|^2  =>  dL/dW = delta x^T, dL/db = delta.
  FieldNetwork<double> net({3, 2}, Activation::Sine);
  net.layers()[0].weight << 0.5, -1, 2, 0.25, 0, 1;
  net.layers()[0].bias << 0.1, -0.2;
  const VecX<double> x = (VecX<double>(3) << 1, 2, -1).finished();
  const VecX<double> y = (VecX<double>(2) << 0.3, 0.7).finished();
  const VecX<double> delta = evaluate(net, Mat<double>(x)).col(0) - y;
  const auto g = param_gradients(net, x, delta);
  CHECK((g[0].weight - delta * x.transpose()).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((g[0].bias - delta).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("param_gradients: random parameters vs finite differences") {
  std::mt19937_64 rng(31);
  auto net = random_sine_net(rng, 3, 2);
  const auto x = random_input(rng, 3);
  const auto up = random_input(rng, 2);
  const auto g = param_gradients(net, to_vec(x), to_vec(up));
  std::vector<double> flat(net.parameter_count());
  flatten_into(g, std::span<double>(flat));
  auto params = net.parameters();
  std::uniform_int_distribution<std::size_t> pick(0, params.size() - 1);
  std::vector<double> got, ref;
  for (int k = 0; k < 20; ++k) {
    const std::size_t i = pick(rng);
    got.push_back(flat[i]);
    ref.push_back(diff1(
        [&](double v) {
          auto p = params;
          p[i] = v;
          FieldNetwork<double> n2 = net;
          n2.set_parameters(p);
          const auto y = naive_forward(n2, x);
          return y[0] * up[0] + y[1] * up[1];
        },
        params[i], 1e-4));
  }
  CHECK(rel_error(got, ref) < 1e-4);
}

TEST_CASE("param_gradients: eikonal second-order path") {
  // d/dtheta |grad_x f|^2 through the tangent streams.
  std::mt19937_64 rng(41);
  auto net = random_sine_net(rng, 3, 1);
  const auto x = random_input(rng, 3, 0.8);

  JetSeeds<double> seeds;
  seeds.x = to_vec(x);
  JetLayout layout;
  layout.tangents = 3;
  for (int j = 0; j < 3; ++j) {
    Mat<double> e = Mat<double>::Zero(3, 1);
    e(j, 0) = 1;
    seeds.tangent.push_back(e);
  }
  const auto tape = forward_jet(net, seeds, layout);
  JetCotangents<double> cot;
  for (int j = 0; j < 3; ++j) cot.tangent.push_back(2.0 * tape.tangent_output(j));
  auto grads = net.zeros_like();
  backward_jet(net, tape, cot, grads);
  std::vector<double> flat(net.parameter_count());
  flatten_into(grads, std::span<double>(flat));

  auto grad_norm2 = [&](const FieldNetwork<double>& n) {
    double s = 0;
    for (int j = 0; j < 3; ++j) {
      const double d = diff1(
          [&](double v) {
            auto xx = x;
            xx[j] = v;
            return naive_forward(n, xx)[0];
          },
          x[j], 1e-3);
      s += d * d;
    }
    return s;
  };
  auto params = net.parameters();
  std::uniform_int_distribution<std::size_t> pick(0, params.size() - 1);
  std::vector<double> got, ref;
  for (int k = 0; k < 10; ++k) {
    const std::size_t i = pick(rng);
    got.push_back(flat[i]);
    ref.push_back(diff1(
        [&](double v) {
          auto p = params;
          p[i] = v;
          FieldNetwork<double> n2 = net;
          n2.set_parameters(p);
          return grad_norm2(n2);
        },
        params[i], 1e-4));
  }
  CHECK(rel_error(got, ref) < 1e-4);
}

TEST_CASE("directional_second_derivative: ignored inputs give zero") {
  std::mt19937_64 rng(51);
  auto net = random_sine_net(rng, 5, 3);
  net.layers()[0].weight.col(1).setZero();
  net.layers()[0].weight.col(3).setZero();
  const std::vector<int> subset{1, 3};
  const auto lap = directional_second_derivative(net, to_vec(random_input(rng, 5)), subset);
  CHECK(lap.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("directional_second_derivative: quadratic probe gives 2") {
  // out = 2/w^2 (1 - cos(w x)) = 2/w^2 (1 - sin(w (x + pi/(2w)))) has
  // d^2 out / dx^2 = 2 cos(w x), which is exactly 2 at x = 0.
  const double w = 3.0;
  FieldNetwork<double> net({2, 1, 1}, Activation::Sine, w, w);
  net.layers()[0].weight << 1.0, 0.0;
  net.layers()[0].bias << std::numbers::pi / (2 * w);
  net.layers()[1].weight << -2.0 / (w * w);
  net.layers()[1].bias << 2.0 / (w * w);
  const std::vector<int> subset{0};
  const auto lap = directional_second_derivative(net, VecX<double>(VecX<double>::Zero(2)), subset);
  CHECK(lap(0) == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("directional_second_derivative: ReLU networks are piecewise linear") {
  std::mt19937_64 rng(52);
  FieldNetwork<double> net({4, 16, 16, 2}, Activation::Relu);
  init_siren(net, 3);
  const std::vector<int> subset{0, 2};
  CHECK(directional_second_derivative(net, to_vec(random_input(rng, 4)), subset).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("directional_second_derivative: matches second differences") {
  std::mt19937_64 rng(61);
  double worst = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto net = random_sine_net(rng, 6, 3);
    const auto x = random_input(rng, 6);
    const std::vector<int> subset{1, 2, 4};
    const auto lap = directional_second_derivative(net, to_vec(x), subset);
    std::vector<double> got, ref;
    for (int o = 0; o < 3; ++o) {
      double s = 0;
      for (int j : subset) {
        s += diff2(
            [&](double v) {
              auto xx = x;
              xx[j] = v;
              return eval_scalar(net, xx, o);
            },
            x[j], 1e-3);
      }
      got.push_back(lap(o));
      ref.push_back(s);
    }
    worst = std::max(worst, rel_error(got, ref));
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("init_siren: bounds, statistics and determinism") {
  FieldNetwork<float> net({3, 256, 256, 256, 256, 1}, Activation::Sine);
  init_siren(net, 99);
  const double hidden_bound = std::sqrt(6.0 / 256) / 30;
  CHECK(hidden_bound == doctest::Approx(0.00510).epsilon(1e-3));
  CHECK(net.layers()[0].weight.cwiseAbs().maxCoeff() <= 1.0 / 3 + 1e-7);
  for (std::size_t l = 1; l < net.layer_count(); ++l) {
    CHECK(net.layers()[l].weight.cwiseAbs().maxCoeff() <= hidden_bound + 1e-7);
  }

  // Hidden-layer preactivations omega (W h + b) are roughly unit variance.
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> u(-1, 1);
  Mat<float> x(3, 10000);
  for (int i = 0; i < x.cols(); ++i) x.col(i) << u(rng), u(rng), u(rng);
  Mat<float> h = x;
  for (std::size_t l = 0; l + 1 < net.layer_count(); ++l) {
    Mat<float> a = net.layers()[l].weight * h;
    a.colwise() += net.layers()[l].bias;
    a *= net.omega(l);
    if (l > 0) {
      const double mean = a.mean();
      const double var = (a.array() - mean).square().mean();
      CHECK(var > 0.5);
      CHECK(var < 2.0);
    }
    h = a.array().sin().matrix();
  }

  // Output magnitude over the unit ball.
  Mat<float> ball(3, 10000);
  for (int i = 0; i < ball.cols();) {
    Eigen::Vector3f p(u(rng), u(rng), u(rng));
    if (p.squaredNorm() <= 1) ball.col(i++) = p;
  }
  CHECK(evaluate(net, ball).cwiseAbs().mean() < 1.0);

  FieldNetwork<float> again({3, 256, 256, 256, 256, 1}, Activation::Sine);
  init_siren(again, 99);
  CHECK(again.parameters() == net.parameters());
}

TEST_CASE("Fourier encoding and direction seeds") {
  FieldConfig cfg;
  cfg.sdf_width = 16;
  cfg.sdf_hidden_layers = 2;
  cfg.radiance_width = 16;
  cfg.radiance_hidden_layers = 2;
  const auto model = make_fields(cfg, 1).cast<double>();
  CHECK(model.encoding.dim() == 24);
  CHECK(model.radiance.input_dim() == 3 + 3 + 24 + 3 + 16);

  // Seeds are the first and second derivatives of the assembled input.
  std::mt19937_64 rng(3);
  const Mat<double> x = Mat<double>::Random(3, 1);
  const Mat<double> n = Mat<double>::Random(3, 1);
  const Mat<double> z = Mat<double>::Random(16, 1);
  Mat<double> dir = Mat<double>::Random(3, 1);
  dir.col(0).normalize();
  for (int axis = 0; axis < 3; ++axis) {
    Mat<double> first, second;
    model.direction_seeds(dir, axis, first, second);
    for (int row = 0; row < model.radiance_input_dim(); ++row) {
      auto entry = [&](double v) {
        Mat<double> d = dir;
        d(axis, 0) = v;
        return model.radiance_input(x, d, n, z)(row, 0);
      };
      CHECK(first(row, 0) == doctest::Approx(diff1(entry, dir(axis, 0), 1e-4)).epsilon(1e-6));
      CHECK(second(row, 0) == doctest::Approx(diff2(entry, dir(axis, 0), 1e-3)).epsilon(1e-5));
    }
  }
}

TEST_CASE("pretrain_sphere fits the sphere SDF") {
  FieldConfig cfg;
  cfg.sdf_width = 64;
  cfg.sdf_hidden_layers = 3;
  auto model = make_fields(cfg, 7);
  PretrainOptions opts;
  opts.seed = 7;
  pretrain_sphere(model.sdf, opts);
  CHECK(sphere_fit_error(model.sdf, 0.5, 10000, 3) < 0.01);
  const NeuralSdf f(model.sdf);
  CHECK(f.value(Vec3::Zero()) == doctest::Approx(-0.5).epsilon(0.04));
  CHECK(std::abs(f.value(Vec3(0.5, 0, 0))) < 0.02);
  CHECK(std::abs(f.value(Vec3(0, -0.5, 0))) < 0.02);
  CHECK((f.gradient_at(Vec3(0.7, 0, 0)) - Vec3(1, 0, 0)).norm() < 0.1);
}

TEST_CASE("pretrain_sphere rejects a non-positive radius") {
  FieldNetwork<float> net({3, 8, 1}, Activation::Sine);
  PretrainOptions opts;
  opts.radius = 0;
  CHECK_THROWS_AS(pretrain_sphere(net, opts), InvalidArgument);
}

TEST_CASE("checkpoint round trip is bit exact") {
  FieldConfig cfg;
  cfg.sdf_width = 32;
  cfg.sdf_hidden_layers = 2;
  cfg.radiance_width = 24;
  cfg.radiance_hidden_layers = 3;
  cfg.fourier_k_max = 3;
  const auto model = make_fields(cfg, 17);
  const auto bytes = serialize_checkpoint(model);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "NLRC");
  const auto back = deserialize_checkpoint(bytes);
  CHECK(back.parameters() == model.parameters());
  CHECK(back.encoding.k_max == 3);
  CHECK(serialize_checkpoint(back) == bytes);

  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  CHECK_THROWS_AS(deserialize_checkpoint(truncated), ParseError);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(deserialize_checkpoint(bad_magic), ParseError);
}

TEST_CASE("default model size is a few megabytes") {
  const auto model = make_fields(FieldConfig{}, 1);
  const double mb = serialize_checkpoint(model).size() / 1e6;
  MESSAGE("default checkpoint size: " << mb << " MB");
  CHECK(mb <= 3.0);
  CHECK(mb >= 1.0);
}
