#pragma once

#include <cstdint>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "nlr/field_network.hpp"

namespace nlr {

// Sinusoidal encoding of a ray direction: for k = 1..k_max and each
// component c, sin(2 k pi d_c) followed by cos(2 k pi d_c).
struct FourierEncoding {
  int k_max = 4;

  int dim() const { return 3 * 2 * k_max; }

  template <typename T>
  void encode(const T* dir, T* out) const {
    int o = 0;
    for (int k = 1; k <= k_max; ++k) {
      const T w = T(2) * T(k) * std::numbers::pi_v<T>;
      for (int c = 0; c < 3; ++c) {
        out[o++] = std::sin(w * dir[c]);
        out[o++] = std::cos(w * dir[c]);
      }
    }
  }

  // First and second derivatives of every encoded entry w.r.t. dir[axis].
  template <typename T>
  void derivatives(const T* dir, int axis, T* d1, T* d2) const {
    int o = 0;
    for (int k = 1; k <= k_max; ++k) {
      const T w = T(2) * T(k) * std::numbers::pi_v<T>;
      for (int c = 0; c < 3; ++c) {
        const T s = std::sin(w * dir[c]);
        const T co = std::cos(w * dir[c]);
        const bool on = c == axis;
        d1[o] = on ? w * co : T(0);
        d2[o] = on ? -w * w * s : T(0);
        ++o;
        d1[o] = on ? -w * s : T(0);
        d2[o] = on ? -w * w * co : T(0);
        ++o;
      }
    }
  }
};

struct FieldConfig {
  int sdf_width = 256;
  int sdf_hidden_layers = 4;
  int radiance_width = 256;
  int radiance_hidden_layers = 4;
  Activation activation = Activation::Sine;
  double omega0 = 30.0;
  // 0 drops the Fourier features from the radiance input.
  int fourier_k_max = 4;
};

// f(x; theta) and B(x, r_d, n, z; theta, phi). The radiance network reads
// z, the SDF network's last hidden layer, which makes B depend on theta.
template <typename T>
struct FieldModel {
  FieldNetwork<T> sdf;       // 3 -> 1
  FieldNetwork<T> radiance;  // x, r_d, FF(r_d), n, z -> rgb
  FourierEncoding encoding;

  int feature_dim() const { return sdf.tap_dim(); }

  // Radiance input layout.
  static constexpr int kPos = 0;
  static constexpr int kDir = 3;
  int ff_offset() const { return 6; }
  int normal_offset() const { return 6 + encoding.dim(); }
  int feature_offset() const { return normal_offset() + 3; }
  int radiance_input_dim() const { return feature_offset() + feature_dim(); }

  std::size_t parameter_count() const { return sdf.parameter_count() + radiance.parameter_count(); }

  template <typename U>
  FieldModel<U> cast() const {
    return FieldModel<U>{sdf.template cast<U>(), radiance.template cast<U>(), encoding};
  }

  std::vector<T> parameters() const {
    std::vector<T> p(parameter_count());
    sdf.copy_parameters_to(std::span<T>(p.data(), sdf.parameter_count()));
    radiance.copy_parameters_to(std::span<T>(p.data() + sdf.parameter_count(), radiance.parameter_count()));
    return p;
  }

  void set_parameters(std::span<const T> p) {
    if (p.size() != parameter_count()) throw DimensionMismatch("fields: parameter vector size");
    sdf.set_parameters(p.subspan(0, sdf.parameter_count()));
    radiance.set_parameters(p.subspan(sdf.parameter_count()));
  }

  // Assembles radiance inputs (columns) from positions, unit directions,
  // normals and features.
  Mat<T> radiance_input(const Mat<T>& x, const Mat<T>& dir, const Mat<T>& normal, const Mat<T>& feature) const {
    const int n = static_cast<int>(x.cols());
    Mat<T> v(radiance_input_dim(), n);
    v.middleRows(kPos, 3) = x;
    v.middleRows(kDir, 3) = dir;
    for (int i = 0; i < n; ++i) encoding.encode(dir.col(i).data(), v.col(i).data() + ff_offset());
    v.middleRows(normal_offset(), 3) = normal;
    v.middleRows(feature_offset(), feature_dim()) = feature;
    return v;
  }

  // Jet seeds for d/d r_d[axis] (first) and d^2/d r_d[axis]^2 (second) of
  // the radiance input, including the chain through the Fourier features.
  void direction_seeds(const Mat<T>& dir, int axis, Mat<T>& first, Mat<T>& second) const {
    const int n = static_cast<int>(dir.cols());
    first = Mat<T>::Zero(radiance_input_dim(), n);
    second = Mat<T>::Zero(radiance_input_dim(), n);
    for (int i = 0; i < n; ++i) {
      first(kDir + axis, i) = T(1);
      encoding.derivatives(dir.col(i).data(), axis, first.col(i).data() + ff_offset(),
                           second.col(i).data() + ff_offset());
    }
  }
};

// Builds both networks with SIREN (or He for ReLU) initialization.
FieldModel<float> make_fields(const FieldConfig& cfg, std::uint64_t seed);

// Regresses the SDF (value and gradient) toward the sphere |x| - radius on
// samples of the [-1,1]^3 cube, denser near the origin, using Adam at the given learning rate. Throws NonFinite
// if the loss diverges.
struct PretrainOptions {
  double radius = 0.5;
  int steps = 2000;
  int batch = 1024;
  double lr = 1e-4;
  // Weight of the |grad f - x/|x||^2 term; 0 regresses values only.
  double gradient_weight = 1.0;
  std::uint64_t seed = 0;
};
void pretrain_sphere(FieldNetwork<float>& sdf, const PretrainOptions& opts);

// Mean |f(x) - (|x| - radius)| over `samples` uniform points in the
// radius-1 ball.
double sphere_fit_error(const FieldNetwork<float>& sdf, double radius, int samples, std::uint64_t seed);

// Checkpoint file: "NLRC", u32 version, u32 network count, then per network
// u32 role, u32 activation, f32 first omega, f32 hidden omega, u32 layer
// count + 1, u32 dims[], u32 Fourier k_max (radiance) or 0, followed by the
// parameters as little-endian f32 (per layer: weights row-major, then bias).
inline constexpr std::uint32_t kCheckpointVersion = 1;
std::vector<std::uint8_t> serialize_checkpoint(const FieldModel<float>& model);
FieldModel<float> deserialize_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, const FieldModel<float>& model);
FieldModel<float> load_checkpoint(const std::filesystem::path& path);

// FNV-1a over the checkpoint bytes, as a hex string.
std::string checkpoint_hash(const FieldModel<float>& model);

}  // namespace nlr
