#include "nlr/trainer.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "nlr/errors.hpp"

namespace nlr {
namespace {

constexpr std::uint32_t kOptimVersion = 1;

void put_u32(std::ostream& o, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) o.put(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::ostream& o, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) o.put(static_cast<char>((v >> (8 * i)) & 0xff));
}
std::uint64_t get_uint(std::istream& in, int bytes, const std::string& file) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    const int c = in.get();
    if (c == EOF) throw ParseError("trainer: truncated optimizer state " + file);
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}

std::string numbered(const char* prefix, std::int64_t b, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%06lld.%s", prefix, static_cast<long long>(b), ext);
  return buf;
}

}  // namespace

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.fields.sdf_width = 64;
  c.fields.sdf_hidden_layers = 3;
  c.fields.radiance_width = 64;
  c.fields.radiance_hidden_layers = 3;
  c.batch_size = 2048;
  c.total_batches = 5000;
  c.lr_decay_every = 2000;
  // Sharpen the mask loss as training goes; a fixed alpha steepens the SDF.
  c.alpha_double_every = 1000;
  c.checkpoint_every = 1000;
  return c;
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw InvalidArgument("trainer: batch_size must be >= 1");
  if (total_batches < 0) throw InvalidArgument("trainer: total_batches must be >= 0");
  if (!(lr > 0)) throw InvalidArgument("trainer: lr must be positive");
  if (lr_decay_every < 1 || !(lr_decay_factor >= 1)) throw InvalidArgument("trainer: bad learning-rate decay");
  if (eikonal_samples < 0) throw InvalidArgument("trainer: eikonal_samples must be >= 0");
  if (alpha_double_every < 0) throw InvalidArgument("trainer: alpha_double_every must be >= 0");
  if (checkpoint_every < 1) throw InvalidArgument("trainer: checkpoint_every must be >= 1");
  if (fields.sdf_width < 1 || fields.sdf_hidden_layers < 1 || fields.radiance_width < 1 ||
      fields.radiance_hidden_layers < 1) {
    throw InvalidArgument("trainer: network sizes must be positive");
  }
  weights.validate();
  trace.validate();
}

double TrainConfig::lr_at(std::int64_t batch) const {
  return lr * std::pow(lr_decay_factor, -static_cast<double>(batch / lr_decay_every));
}

double TrainConfig::alpha_at(std::int64_t batch) const {
  if (alpha_double_every == 0) return weights.alpha;
  return weights.alpha * std::pow(2.0, static_cast<double>(batch / alpha_double_every));
}

std::vector<RaySample> sample_ray_batch(const Scene& scene, int n, std::mt19937_64& rng) {
  if (scene.views.empty()) throw EmptyScene("trainer: scene has no views");
  if (n < 1) throw InvalidArgument("trainer: batch size must be >= 1");
  std::vector<std::uint64_t> offsets{0};
  for (const auto& v : scene.views) offsets.push_back(offsets.back() + v.pixel_count());
  if (offsets.back() == 0) throw EmptyScene("trainer: scene has no pixels");
  std::uniform_int_distribution<std::uint64_t> pick(0, offsets.back() - 1);
  std::vector<RaySample> out(static_cast<std::size_t>(n));
  for (auto& s : out) {
    const std::uint64_t g = pick(rng);
    const auto it = std::upper_bound(offsets.begin(), offsets.end(), g) - 1;
    const auto& view = scene.views[static_cast<std::size_t>(it - offsets.begin())];
    const auto p = static_cast<int>(g - *it);
    const int x = p % view.image.width, y = p / view.image.width;
    s.ray = ray_from_pixel(view.camera, x, y);
    for (int c = 0; c < 3; ++c) s.rgb[c] = view.image.at(x, y, c);
    s.mask = view.mask[static_cast<std::size_t>(p)] != 0;
  }
  return out;
}

std::mt19937_64 batch_rng(std::uint64_t seed, std::int64_t batch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(batch), static_cast<std::uint32_t>(static_cast<std::uint64_t>(batch) >> 32)};
  return std::mt19937_64(seq);
}

void save_optimizer_state(const std::filesystem::path& path, const AdamState& state, std::int64_t next_batch) {
  std::ofstream o(path, std::ios::binary);
  if (!o) throw IoError("trainer: cannot write " + path.string());
  o.write("NLRO", 4);
  put_u32(o, kOptimVersion);
  put_u64(o, static_cast<std::uint64_t>(next_batch));
  put_u64(o, state.step);
  put_u64(o, state.m.size());
  for (const auto* vec : {&state.m, &state.v})
    for (float f : *vec) put_u32(o, std::bit_cast<std::uint32_t>(f));
  if (!o) throw IoError("trainer: short write to " + path.string());
}

AdamState load_optimizer_state(const std::filesystem::path& path, std::int64_t& next_batch) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFile("trainer: missing optimizer state " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "NLRO") throw ParseError("trainer: bad optimizer state magic in " + path.string());
  const auto file = path.string();
  if (get_uint(in, 4, file) != kOptimVersion) throw ParseError("trainer: unsupported optimizer state version");
  next_batch = static_cast<std::int64_t>(get_uint(in, 8, file));
  const std::uint64_t step = get_uint(in, 8, file);
  const std::uint64_t n = get_uint(in, 8, file);
  if (n > (1ULL << 31)) throw ParseError("trainer: implausible parameter count in " + file);
  AdamState s(static_cast<std::size_t>(n));
  s.step = step;
  for (auto* vec : {&s.m, &s.v})
    for (auto& f : *vec) f = std::bit_cast<float>(static_cast<std::uint32_t>(get_uint(in, 4, file)));
  return s;
}

TrainResult train(const Scene& scene, const TrainConfig& cfg, const TrainOutputs& out) {
  cfg.validate();
  scene.validate();
  std::filesystem::create_directories(out.dir);

  TrainResult res;
  AdamState adam;
  std::int64_t start = 0;
  if (out.resume_checkpoint) {
    res.model = load_checkpoint(*out.resume_checkpoint);
    if (!out.resume_optimizer) throw InvalidArgument("trainer: resuming needs the optimizer state too");
    adam = load_optimizer_state(*out.resume_optimizer, start);
    if (adam.m.size() != res.model.parameter_count()) {
      throw DimensionMismatch("trainer: optimizer state does not match the checkpoint");
    }
  } else {
    res.model = make_fields(cfg.fields, cfg.seed);
    PretrainOptions po = cfg.pretrain;
    po.seed = cfg.seed;
    pretrain_sphere(res.model.sdf, po);
    adam = AdamState(res.model.parameter_count());
  }

  ObjectiveOptions opts;
  opts.weights = cfg.weights;
  if (!cfg.use_smoothness) opts.weights.w_S = 0;
  opts.denom_clamp = cfg.trace.denom_clamp;
  const int eik = cfg.eikonal_samples > 0 ? cfg.eikonal_samples : cfg.batch_size;

  const auto log_path = out.dir / "loss.csv";
  const bool append = start > 0 && std::filesystem::exists(log_path) && std::filesystem::file_size(log_path) > 0;
  std::ofstream log(log_path, append ? std::ios::app : std::ios::trunc);
  if (!log) throw IoError("trainer: cannot write " + log_path.string());
  if (!append) log << "batch,L_R,L_E,L_M,L_S,total,lr,seconds\n";
  log.precision(9);

  std::vector<float> params = res.model.parameters();
  const auto t0 = std::chrono::steady_clock::now();
  for (std::int64_t b = start; b < cfg.total_batches; ++b) {
    auto rng = batch_rng(cfg.seed, b);
    auto samples = sample_ray_batch(scene, cfg.batch_size, rng);
    const NeuralSdf sdf(res.model.sdf);
    const auto traced = trace_batch(sdf, std::move(samples), cfg.trace, eik, rng);
    opts.weights.alpha = cfg.alpha_at(b);
    const auto r = loss_total(res.model, traced, opts);
    const double lr = cfg.lr_at(b);
    adam_step(adam, std::span<float>(params), std::span<const float>(r.gradient), lr);
    res.model.set_parameters(params);
    res.last = r.terms;
    ++res.batches_run;

    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log << b << ',' << r.terms.L_R << ',' << r.terms.L_E << ',' << r.terms.L_M << ',' << r.terms.L_S << ','
        << r.terms.total << ',' << lr << ',' << secs << '\n';
    if (out.on_batch) out.on_batch(b, r.terms);
    if ((b + 1) % cfg.checkpoint_every == 0) {
      log.flush();
      save_checkpoint(out.dir / numbered("ckpt", b + 1, "nlrc"), res.model);
      save_optimizer_state(out.dir / numbered("optim", b + 1, "bin"), adam, b + 1);
    }
  }
  res.final_checkpoint = out.dir / "model.nlrc";
  save_checkpoint(res.final_checkpoint, res.model);
  save_optimizer_state(out.dir / "optim.bin", adam, std::max<std::int64_t>(start, cfg.total_batches));
  return res;
}

}  // namespace nlr
