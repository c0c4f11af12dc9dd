#include "nlr/fields.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "nlr/adam.hpp"

namespace nlr {
namespace {

std::vector<int> mlp_dims(int in, int width, int hidden_layers, int out) {
  std::vector<int> dims{in};
  for (int i = 0; i < hidden_layers; ++i) dims.push_back(width);
  dims.push_back(out);
  return dims;
}

class ByteWriter {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void raw(const char* s, std::size_t n) { bytes_.insert(bytes_.end(), s, s + n); }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> b) : bytes_(b) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  void expect(const char* s, std::size_t n) {
    need(n);
    if (std::memcmp(bytes_.data() + pos_, s, n) != 0) throw ParseError("fields: bad checkpoint magic");
    pos_ += n;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw ParseError("fields: truncated checkpoint");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void write_network(ByteWriter& w, const FieldNetwork<float>& net, std::uint32_t role, std::uint32_t k_max) {
  w.u32(role);
  w.u32(static_cast<std::uint32_t>(net.activation()));
  w.f32(net.first_omega());
  w.f32(net.hidden_omega());
  w.u32(static_cast<std::uint32_t>(net.dims().size()));
  for (int d : net.dims()) w.u32(static_cast<std::uint32_t>(d));
  w.u32(k_max);
  for (float p : net.parameters()) w.f32(p);
}

FieldNetwork<float> read_network(ByteReader& r, std::uint32_t expected_role, std::uint32_t& k_max) {
  const std::uint32_t role = r.u32();
  if (role != expected_role) throw ParseError("fields: unexpected network role in checkpoint");
  const std::uint32_t act = r.u32();
  if (act > 1) throw ParseError("fields: unknown activation tag " + std::to_string(act));
  const float w0 = r.f32();
  const float w1 = r.f32();
  const std::uint32_t n = r.u32();
  if (n < 2 || n > 64) throw ParseError("fields: bad layer count in checkpoint");
  std::vector<int> dims(n);
  for (auto& d : dims) {
    d = static_cast<int>(r.u32());
    if (d < 1 || d > (1 << 16)) throw ParseError("fields: bad layer width in checkpoint");
  }
  k_max = r.u32();
  FieldNetwork<float> net(dims, static_cast<Activation>(act), w0, w1);
  std::vector<float> params(net.parameter_count());
  for (auto& p : params) p = r.f32();
  net.set_parameters(params);
  return net;
}

}  // namespace

FieldModel<float> make_fields(const FieldConfig& cfg, std::uint64_t seed) {
  if (cfg.fourier_k_max < 0) throw InvalidArgument("fields: fourier_k_max must be >= 0");
  FieldModel<float> model;
  model.encoding.k_max = cfg.fourier_k_max;
  const auto w0 = static_cast<float>(cfg.omega0);
  model.sdf = FieldNetwork<float>(mlp_dims(3, cfg.sdf_width, cfg.sdf_hidden_layers, 1), cfg.activation, w0, w0);
  const int rad_in = 6 + model.encoding.dim() + 3 + model.sdf.tap_dim();
  model.radiance =
      FieldNetwork<float>(mlp_dims(rad_in, cfg.radiance_width, cfg.radiance_hidden_layers, 3), cfg.activation, w0, w0);
  init_siren(model.sdf, seed);
  init_siren(model.radiance, seed ^ 0x9e3779b97f4a7c15ULL);
  return model;
}

void pretrain_sphere(FieldNetwork<float>& sdf, const PretrainOptions& opts) {
  if (opts.radius <= 0) throw InvalidArgument("fields: pretrain radius must be positive");
  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  AdamState adam(sdf.parameter_count());
  std::vector<float> params = sdf.parameters();
  std::vector<float> flat(params.size());
  const int n = opts.batch;
  for (int step = 0; step < opts.steps; ++step) {
    Mat<float> x(3, n);
    // A quarter of the samples cluster at the origin, where the cone tip
    // of |x| - r is otherwise rounded off.
    for (int i = 0; i < n; ++i) {
      const float s = i % 4 == 0 ? 0.05f : 1.0f;
      for (int c = 0; c < 3; ++c) x(c, i) = s * u(rng);
    }
    JetSeeds<float> seeds;
    seeds.x = x;
    JetLayout layout;
    if (opts.gradient_weight > 0) {
      layout.tangents = 3;
      for (int j = 0; j < 3; ++j) {
        Mat<float> e = Mat<float>::Zero(3, n);
        e.row(j).setOnes();
        seeds.tangent.push_back(std::move(e));
      }
    }
    const auto tape = forward_jet(sdf, std::move(seeds), layout);
    Mat<float> resid(1, n);
    JetCotangents<float> cot;
    double loss = 0;
    for (int i = 0; i < n; ++i) {
      resid(0, i) = tape.output()(0, i) - (x.col(i).norm() - static_cast<float>(opts.radius));
      loss += static_cast<double>(resid(0, i)) * resid(0, i);
    }
    cot.output = (2.0f / n) * resid;
    if (opts.gradient_weight > 0) {
      // Match the analytic gradient x / |x| as well.
      const auto gw = static_cast<float>(2.0 * opts.gradient_weight / n);
      for (int j = 0; j < 3; ++j) cot.tangent.push_back(Mat<float>(1, n));
      for (int i = 0; i < n; ++i) {
        const Eigen::Vector3f dir = x.col(i).normalized();
        for (int j = 0; j < 3; ++j) {
          const float d = tape.tangent_output(j)(0, i) - dir(j);
          loss += opts.gradient_weight * d * d;
          cot.tangent[j](0, i) = gw * d;
        }
      }
    }
    if (!std::isfinite(loss)) throw NonFinite("fields: sphere pretraining diverged");
    auto grads = sdf.zeros_like();
    backward_jet(sdf, tape, cot, grads);
    flatten_into(grads, std::span<float>(flat));
    adam_step(adam, std::span<float>(params), std::span<const float>(flat), opts.lr);
    sdf.set_parameters(params);
  }
}

double sphere_fit_error(const FieldNetwork<float>& sdf, double radius, int samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Mat<float> x(3, samples);
  for (int i = 0; i < samples;) {
    const Eigen::Vector3d p(u(rng), u(rng), u(rng));
    if (p.squaredNorm() > 1.0) continue;
    x.col(i++) = p.cast<float>();
  }
  const Mat<float> f = evaluate(sdf, x);
  double err = 0;
  for (int i = 0; i < samples; ++i) err += std::abs(f(0, i) - (x.col(i).cast<double>().norm() - radius));
  return err / samples;
}

std::vector<std::uint8_t> serialize_checkpoint(const FieldModel<float>& model) {
  ByteWriter w;
  w.raw("NLRC", 4);
  w.u32(kCheckpointVersion);
  w.u32(2);
  write_network(w, model.sdf, 0, 0);
  write_network(w, model.radiance, 1, static_cast<std::uint32_t>(model.encoding.k_max));
  return w.take();
}

FieldModel<float> deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect("NLRC", 4);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) throw ParseError("fields: unsupported checkpoint version " + std::to_string(version));
  if (r.u32() != 2) throw ParseError("fields: checkpoint must hold an SDF and a radiance network");
  FieldModel<float> model;
  std::uint32_t k = 0;
  model.sdf = read_network(r, 0, k);
  model.radiance = read_network(r, 1, k);
  model.encoding.k_max = static_cast<int>(k);
  if (model.sdf.input_dim() != 3 || model.sdf.output_dim() != 1) throw ParseError("fields: SDF network must map 3 -> 1");
  if (model.radiance.input_dim() != model.radiance_input_dim() || model.radiance.output_dim() != 3) {
    throw ParseError("fields: radiance network input does not match the SDF feature width");
  }
  if (!r.done()) throw ParseError("fields: trailing bytes in checkpoint");
  return model;
}

void save_checkpoint(const std::filesystem::path& path, const FieldModel<float>& model) {
  const auto bytes = serialize_checkpoint(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("fields: cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("fields: short write to " + path.string());
}

FieldModel<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFile("fields: cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

std::string checkpoint_hash(const FieldModel<float>& model) {
  std::uint64_t h = 1469598103934665603ULL;
  for (std::uint8_t b : serialize_checkpoint(model)) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << h;
  return s.str();
}

}  // namespace nlr
