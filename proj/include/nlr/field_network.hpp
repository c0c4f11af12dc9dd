#pragma once

// Fixed-topology MLP with analytic derivative propagation.
//
// Samples are stored as matrix columns. Besides plain evaluation, a forward
// "jet" pass carries first-order tangent streams (directional derivatives of
// every activation w.r.t. chosen input directions) and second-order streams
// (second directional derivatives for chosen pairs of those directions). The
// reverse pass differentiates the whole jet, so losses on input gradients
// (eikonal term, normals) and on input Laplacians (angular smoothness) get
// exact parameter gradients without a general autodiff graph.

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nlr/errors.hpp"

namespace nlr {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using VecX = Eigen::Matrix<T, Eigen::Dynamic, 1>;

enum class Activation : std::uint32_t { Sine = 0, Relu = 1 };

template <typename T>
struct DenseLayer {
  Mat<T> weight;  // out x in
  VecX<T> bias;   // out

  int in() const { return static_cast<int>(weight.cols()); }
  int out() const { return static_cast<int>(weight.rows()); }
};

// Parameter-shaped container, used for gradients and optimizer moments.
template <typename T>
using LayerParams = std::vector<DenseLayer<T>>;

template <typename T>
class FieldNetwork {
 public:
  FieldNetwork() = default;

  // dims = {input, hidden..., output}; every layer but the last applies the
  // activation. Sine layers compute sin(omega * (W h + b)) with first_omega
  // on the first layer and hidden_omega on the rest.
  FieldNetwork(std::vector<int> dims, Activation activation, T first_omega = T(30),
               T hidden_omega = T(30))
      : dims_(std::move(dims)),
        activation_(activation),
        first_omega_(first_omega),
        hidden_omega_(hidden_omega) {
    if (dims_.size() < 2) throw InvalidArgument("fields: network needs at least one layer");
    for (int d : dims_) {
      if (d < 1) throw InvalidArgument("fields: layer dimensions must be positive");
    }
    layers_.resize(dims_.size() - 1);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      layers_[l].weight = Mat<T>::Zero(dims_[l + 1], dims_[l]);
      layers_[l].bias = VecX<T>::Zero(dims_[l + 1]);
    }
  }

  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }
  std::size_t layer_count() const { return layers_.size(); }
  const std::vector<int>& dims() const { return dims_; }
  Activation activation() const { return activation_; }
  T first_omega() const { return first_omega_; }
  T hidden_omega() const { return hidden_omega_; }

  // Width of the last hidden layer (the feature tap), or the input width for
  // a single-layer network.
  int tap_dim() const { return dims_[dims_.size() - 2]; }

  bool is_last(std::size_t l) const { return l + 1 == layers_.size(); }
  T omega(std::size_t l) const {
    if (activation_ != Activation::Sine || is_last(l)) return T(1);
    return l == 0 ? first_omega_ : hidden_omega_;
  }

  std::vector<DenseLayer<T>>& layers() { return layers_; }
  const std::vector<DenseLayer<T>>& layers() const { return layers_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
    return n;
  }

  // Flat parameter order: per layer, weights row-major then bias.
  void copy_parameters_to(std::span<T> out) const {
    if (out.size() != parameter_count()) throw DimensionMismatch("fields: parameter buffer size");
    std::size_t k = 0;
    for (const auto& l : layers_) {
      for (int r = 0; r < l.weight.rows(); ++r)
        for (int c = 0; c < l.weight.cols(); ++c) out[k++] = l.weight(r, c);
      for (int r = 0; r < l.bias.size(); ++r) out[k++] = l.bias(r);
    }
  }

  void set_parameters(std::span<const T> in) {
    if (in.size() != parameter_count()) throw DimensionMismatch("fields: parameter buffer size");
    std::size_t k = 0;
    for (auto& l : layers_) {
      for (int r = 0; r < l.weight.rows(); ++r)
        for (int c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = in[k++];
      for (int r = 0; r < l.bias.size(); ++r) l.bias(r) = in[k++];
    }
  }

  std::vector<T> parameters() const {
    std::vector<T> p(parameter_count());
    copy_parameters_to(p);
    return p;
  }

  template <typename U>
  FieldNetwork<U> cast() const {
    FieldNetwork<U> out(dims_, activation_, static_cast<U>(first_omega_),
                        static_cast<U>(hidden_omega_));
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      out.layers()[l].weight = layers_[l].weight.template cast<U>();
      out.layers()[l].bias = layers_[l].bias.template cast<U>();
    }
    return out;
  }

  LayerParams<T> zeros_like() const {
    LayerParams<T> g(layers_.size());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      g[l].weight = Mat<T>::Zero(layers_[l].weight.rows(), layers_[l].weight.cols());
      g[l].bias = VecX<T>::Zero(layers_[l].bias.size());
    }
    return g;
  }

 private:
  std::vector<int> dims_;
  Activation activation_ = Activation::Sine;
  T first_omega_ = T(30);
  T hidden_omega_ = T(30);
  std::vector<DenseLayer<T>> layers_;
};

template <typename T>
void add_to(LayerParams<T>& acc, const LayerParams<T>& g, T scale = T(1)) {
  for (std::size_t l = 0; l < acc.size(); ++l) {
    acc[l].weight += scale * g[l].weight;
    acc[l].bias += scale * g[l].bias;
  }
}

template <typename T>
void flatten_into(const LayerParams<T>& g, std::span<T> out) {
  std::size_t k = 0;
  for (const auto& l : g) {
    for (int r = 0; r < l.weight.rows(); ++r)
      for (int c = 0; c < l.weight.cols(); ++c) out[k++] = l.weight(r, c);
    for (int r = 0; r < l.bias.size(); ++r) out[k++] = l.bias(r);
  }
}

// Activation value and its first three derivatives at omega * a.
template <typename T>
struct ActivationDerivs {
  Mat<T> value, d1, d2, d3;
};

template <typename T>
ActivationDerivs<T> activation_derivs(const FieldNetwork<T>& net, std::size_t l, const Mat<T>& a,
                                      int order) {
  ActivationDerivs<T> r;
  if (net.is_last(l)) {
    r.value = a;
    if (order >= 1) r.d1 = Mat<T>::Ones(a.rows(), a.cols());
    if (order >= 2) r.d2 = Mat<T>::Zero(a.rows(), a.cols());
    if (order >= 3) r.d3 = Mat<T>::Zero(a.rows(), a.cols());
    return r;
  }
  if (net.activation() == Activation::Relu) {
    r.value = a.cwiseMax(T(0));
    if (order >= 1) r.d1 = (a.array() > T(0)).template cast<T>().matrix();
    if (order >= 2) r.d2 = Mat<T>::Zero(a.rows(), a.cols());
    if (order >= 3) r.d3 = Mat<T>::Zero(a.rows(), a.cols());
    return r;
  }
  const T w = net.omega(l);
  const Mat<T> wa = w * a;
  r.value = wa.array().sin().matrix();
  if (order >= 1) {
    const Mat<T> c = wa.array().cos().matrix();
    r.d1 = w * c;
    if (order >= 3) r.d3 = (-w * w * w) * c;
  }
  if (order >= 2) r.d2 = (-w * w) * r.value;
  return r;
}

// Plain batched evaluation. If tap is non-null it receives the input of the
// last layer (the last hidden activations).
template <typename T>
Mat<T> evaluate(const FieldNetwork<T>& net, const Mat<T>& x, Mat<T>* tap = nullptr) {
  if (x.rows() != net.input_dim()) {
    throw DimensionMismatch("fields: input has " + std::to_string(x.rows()) + " rows, network expects " +
                            std::to_string(net.input_dim()));
  }
  Mat<T> h = x;
  const auto& layers = net.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (net.is_last(l) && tap != nullptr) *tap = h;
    Mat<T> a = layers[l].weight * h;
    a.colwise() += layers[l].bias;
    if (net.is_last(l)) {
      h = std::move(a);
    } else if (net.activation() == Activation::Relu) {
      h = a.cwiseMax(T(0));
    } else {
      h = (net.omega(l) * a).array().sin().matrix();
    }
  }
  return h;
}

// Which derivative streams a jet pass carries. Tangent j is seeded by the
// caller; second-order pair (i, k) tracks d^2/(d_i d_k) along tangents i, k.
struct JetLayout {
  int tangents = 0;
  std::vector<std::pair<int, int>> pairs;
};

template <typename T>
struct JetSeeds {
  Mat<T> x;                     // in x N
  std::vector<Mat<T>> tangent;  // in x N each, size = layout.tangents
  std::vector<Mat<T>> second;   // in x N each, size = layout.pairs.size()
};

// Everything the reverse pass needs. h[l] is the input of layer l and
// h.back() the network output; likewise for the derivative streams.
template <typename T>
struct JetTape {
  JetLayout layout;
  std::vector<Mat<T>> h;
  std::vector<std::vector<Mat<T>>> t;
  std::vector<std::vector<Mat<T>>> q;
  std::vector<Mat<T>> a;
  std::vector<std::vector<Mat<T>>> s;
  std::vector<std::vector<Mat<T>>> r;

  const Mat<T>& output() const { return h.back(); }
  const Mat<T>& tangent_output(int j) const { return t.back()[j]; }
  const Mat<T>& second_output(int p) const { return q.back()[p]; }
  // Input of the final layer.
  const Mat<T>& tap() const { return h[h.size() - 2]; }
};

template <typename T>
JetTape<T> forward_jet(const FieldNetwork<T>& net, JetSeeds<T> seeds, const JetLayout& layout) {
  const auto& layers = net.layers();
  const std::size_t L = layers.size();
  if (seeds.x.rows() != net.input_dim()) throw DimensionMismatch("fields: jet input dimension");
  if (static_cast<int>(seeds.tangent.size()) != layout.tangents ||
      seeds.second.size() != layout.pairs.size()) {
    throw DimensionMismatch("fields: jet seed count does not match layout");
  }
  const int order = layout.pairs.empty() ? (layout.tangents > 0 ? 1 : 0) : 2;

  JetTape<T> tape;
  tape.layout = layout;
  tape.h.resize(L + 1);
  tape.t.resize(L + 1);
  tape.q.resize(L + 1);
  tape.a.resize(L);
  tape.s.resize(L);
  tape.r.resize(L);
  tape.h[0] = std::move(seeds.x);
  tape.t[0] = std::move(seeds.tangent);
  tape.q[0] = std::move(seeds.second);

  for (std::size_t l = 0; l < L; ++l) {
    const auto& W = layers[l].weight;
    Mat<T> a = W * tape.h[l];
    a.colwise() += layers[l].bias;
    auto& s = tape.s[l];
    auto& r = tape.r[l];
    s.resize(layout.tangents);
    r.resize(layout.pairs.size());
    for (int j = 0; j < layout.tangents; ++j) s[j] = W * tape.t[l][j];
    for (std::size_t p = 0; p < layout.pairs.size(); ++p) r[p] = W * tape.q[l][p];

    const auto d = activation_derivs(net, l, a, order);
    tape.h[l + 1] = d.value;
    tape.t[l + 1].resize(layout.tangents);
    tape.q[l + 1].resize(layout.pairs.size());
    for (int j = 0; j < layout.tangents; ++j) tape.t[l + 1][j] = d.d1.cwiseProduct(s[j]);
    for (std::size_t p = 0; p < layout.pairs.size(); ++p) {
      const auto [i, k] = layout.pairs[p];
      tape.q[l + 1][p] =
          d.d2.cwiseProduct(s[i]).cwiseProduct(s[k]) + d.d1.cwiseProduct(r[p]);
    }
    tape.a[l] = std::move(a);
  }
  return tape;
}

// Cotangents on the jet outputs. Empty matrices mean zero.
template <typename T>
struct JetCotangents {
  Mat<T> output;                // out x N
  std::vector<Mat<T>> tangent;  // out x N per tangent stream
  std::vector<Mat<T>> second;   // out x N per pair
  Mat<T> tap;                   // tap_dim x N, added at the input of the final layer
};

// Reverse pass through a jet. Accumulates parameter gradients into grads and
// returns the cotangent of the input values (in x N) when want_input is set.
template <typename T>
Mat<T> backward_jet(const FieldNetwork<T>& net, const JetTape<T>& tape, const JetCotangents<T>& cot,
                    LayerParams<T>& grads, bool want_input = false) {
  const auto& layers = net.layers();
  const std::size_t L = layers.size();
  const auto& layout = tape.layout;
  const int N = static_cast<int>(tape.h[0].cols());
  const int nt = layout.tangents;
  const std::size_t np = layout.pairs.size();
  const int order = np > 0 ? 3 : (nt > 0 ? 2 : 1);

  auto or_zero = [&](const Mat<T>& m, int rows) {
    return m.size() == 0 ? Mat<T>(Mat<T>::Zero(rows, N)) : m;
  };
  Mat<T> hbar = or_zero(cot.output, net.output_dim());
  std::vector<Mat<T>> tbar(nt), qbar(np);
  for (int j = 0; j < nt; ++j)
    tbar[j] = or_zero(j < static_cast<int>(cot.tangent.size()) ? cot.tangent[j] : Mat<T>(), net.output_dim());
  for (std::size_t p = 0; p < np; ++p)
    qbar[p] = or_zero(p < cot.second.size() ? cot.second[p] : Mat<T>(), net.output_dim());

  for (std::size_t li = L; li-- > 0;) {
    const auto& W = layers[li].weight;
    const auto& s = tape.s[li];
    const auto& r = tape.r[li];
    Mat<T> abar;
    std::vector<Mat<T>> sbar(nt), rbar(np);
    if (net.is_last(li)) {
      abar = std::move(hbar);
      for (int j = 0; j < nt; ++j) sbar[j] = std::move(tbar[j]);
      for (std::size_t p = 0; p < np; ++p) rbar[p] = std::move(qbar[p]);
    } else {
      const auto d = activation_derivs(net, li, tape.a[li], order);
      abar = d.d1.cwiseProduct(hbar);
      for (int j = 0; j < nt; ++j) {
        abar += d.d2.cwiseProduct(s[j]).cwiseProduct(tbar[j]);
        sbar[j] = d.d1.cwiseProduct(tbar[j]);
      }
      for (std::size_t p = 0; p < np; ++p) {
        const auto [i, k] = layout.pairs[p];
        abar += (d.d3.cwiseProduct(s[i]).cwiseProduct(s[k]) + d.d2.cwiseProduct(r[p]))
                    .cwiseProduct(qbar[p]);
        const Mat<T> d2q = d.d2.cwiseProduct(qbar[p]);
        sbar[i] += d2q.cwiseProduct(s[k]);
        sbar[k] += d2q.cwiseProduct(s[i]);
        rbar[p] = d.d1.cwiseProduct(qbar[p]);
      }
    }

    grads[li].weight.noalias() += abar * tape.h[li].transpose();
    for (int j = 0; j < nt; ++j) grads[li].weight.noalias() += sbar[j] * tape.t[li][j].transpose();
    for (std::size_t p = 0; p < np; ++p) grads[li].weight.noalias() += rbar[p] * tape.q[li][p].transpose();
    grads[li].bias += abar.rowwise().sum();

    if (li == 0 && !want_input) return {};
    hbar.noalias() = W.transpose() * abar;
    for (int j = 0; j < nt; ++j) tbar[j].noalias() = W.transpose() * sbar[j];
    for (std::size_t p = 0; p < np; ++p) qbar[p].noalias() = W.transpose() * rbar[p];
    if (net.is_last(li) && cot.tap.size() != 0) hbar += cot.tap;
  }
  return hbar;
}

// Full input Jacobian (output_dim x input_dim) at a single point.
template <typename T>
Mat<T> input_gradient(const FieldNetwork<T>& net, const VecX<T>& x) {
  if (x.size() != net.input_dim()) throw DimensionMismatch("fields: input dimension");
  const int n = net.input_dim();
  JetSeeds<T> seeds;
  seeds.x = x;
  JetLayout layout;
  layout.tangents = n;
  for (int j = 0; j < n; ++j) {
    Mat<T> e = Mat<T>::Zero(n, 1);
    e(j, 0) = T(1);
    seeds.tangent.push_back(std::move(e));
  }
  const auto tape = forward_jet(net, std::move(seeds), layout);
  Mat<T> jac(net.output_dim(), n);
  for (int j = 0; j < n; ++j) jac.col(j) = tape.tangent_output(j).col(0);
  return jac;
}

// Parameter gradients of <upstream, net(x)> at a single point.
template <typename T>
LayerParams<T> param_gradients(const FieldNetwork<T>& net, const VecX<T>& x, const VecX<T>& upstream) {
  if (x.size() != net.input_dim()) throw DimensionMismatch("fields: input dimension");
  if (upstream.size() != net.output_dim()) throw DimensionMismatch("fields: upstream dimension");
  JetSeeds<T> seeds;
  seeds.x = x;
  const auto tape = forward_jet(net, std::move(seeds), JetLayout{});
  JetCotangents<T> cot;
  cot.output = upstream;
  auto grads = net.zeros_like();
  backward_jet(net, tape, cot, grads);
  return grads;
}

// Per-output sum of pure second derivatives over the given input indices.
template <typename T>
VecX<T> directional_second_derivative(const FieldNetwork<T>& net, const VecX<T>& x,
                                      std::span<const int> subset) {
  if (x.size() != net.input_dim()) throw DimensionMismatch("fields: input dimension");
  const int n = net.input_dim();
  JetSeeds<T> seeds;
  seeds.x = x;
  JetLayout layout;
  layout.tangents = static_cast<int>(subset.size());
  for (std::size_t j = 0; j < subset.size(); ++j) {
    if (subset[j] < 0 || subset[j] >= n) throw DimensionMismatch("fields: subset index out of range");
    Mat<T> e = Mat<T>::Zero(n, 1);
    e(subset[j], 0) = T(1);
    seeds.tangent.push_back(std::move(e));
    seeds.second.push_back(Mat<T>::Zero(n, 1));
    layout.pairs.emplace_back(static_cast<int>(j), static_cast<int>(j));
  }
  const auto tape = forward_jet(net, std::move(seeds), layout);
  VecX<T> lap = VecX<T>::Zero(net.output_dim());
  for (std::size_t p = 0; p < layout.pairs.size(); ++p) lap += tape.second_output(static_cast<int>(p)).col(0);
  return lap;
}

// SIREN initialization: first layer U(-1/in, 1/in), later layers
// U(-sqrt(6/in)/omega, sqrt(6/in)/omega); biases share their layer's bound.
// ReLU networks get He-uniform weights and zero biases.
template <typename T>
void init_siren(FieldNetwork<T>& net, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    auto& layer = net.layers()[l];
    const double in = layer.in();
    double bound;
    double bias_bound;
    if (net.activation() == Activation::Relu) {
      bound = std::sqrt(6.0 / in);
      bias_bound = 0.0;
    } else {
      bound = l == 0 ? 1.0 / in : std::sqrt(6.0 / in) / static_cast<double>(net.hidden_omega());
      bias_bound = bound;
    }
    std::uniform_real_distribution<double> w(-bound, bound);
    for (int r = 0; r < layer.weight.rows(); ++r)
      for (int c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = static_cast<T>(w(rng));
    std::uniform_real_distribution<double> b(-bias_bound, bias_bound);
    for (int r = 0; r < layer.bias.size(); ++r) layer.bias(r) = bias_bound > 0 ? static_cast<T>(b(rng)) : T(0);
  }
}

}  // namespace nlr
