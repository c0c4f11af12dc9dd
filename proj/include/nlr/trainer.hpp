#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "nlr/adam.hpp"
#include "nlr/fields.hpp"
#include "nlr/objective.hpp"
#include "nlr/scene.hpp"
#include "nlr/tracer.hpp"

namespace nlr {

// Defaults follow the full-scale recipe; desk() scales the counts down to
// something a workstation CPU finishes in minutes.
struct TrainConfig {
  FieldConfig fields;
  LossWeights weights;
  TraceConfig trace;
  PretrainOptions pretrain;
  int batch_size = 50000;
  int total_batches = 150000;
  double lr = 1e-4;
  int lr_decay_every = 40000;
  double lr_decay_factor = 2.0;
  int eikonal_samples = 0;  // 0 = batch_size
  bool use_smoothness = true;
  int alpha_double_every = 0;  // 0 keeps the mask softness alpha fixed
  int checkpoint_every = 1000;
  std::uint64_t seed = 0;

  static TrainConfig desk();
  // InvalidArgument on out-of-range values.
  void validate() const;
  double lr_at(std::int64_t batch) const;
  double alpha_at(std::int64_t batch) const;
};

// Uniform over every pixel of every view, with replacement.
std::vector<RaySample> sample_ray_batch(const Scene& scene, int n, std::mt19937_64& rng);

// Generator for batch b; depends only on (seed, b) so runs can resume.
std::mt19937_64 batch_rng(std::uint64_t seed, std::int64_t batch);

// Optimizer state file: "NLRO", u32 version, u64 next batch, u64 Adam step,
// u64 parameter count, then m and v as little-endian f32.
void save_optimizer_state(const std::filesystem::path& path, const AdamState& state, std::int64_t next_batch);
AdamState load_optimizer_state(const std::filesystem::path& path, std::int64_t& next_batch);

struct TrainOutputs {
  std::filesystem::path dir;  // checkpoints, loss log and optimizer state go here
  // Optional checkpoint + optimizer state to resume from.
  std::optional<std::filesystem::path> resume_checkpoint;
  std::optional<std::filesystem::path> resume_optimizer;
  // Called after every batch with the batch index and its losses.
  std::function<void(std::int64_t, const LossTerms&)> on_batch;
};

struct TrainResult {
  FieldModel<float> model;
  LossTerms last;
  std::int64_t batches_run = 0;
  std::filesystem::path final_checkpoint;
};

// Pretrains the SDF to a sphere, then runs total_batches of sample, trace,
// loss and Adam. Writes loss.csv (batch,L_R,L_E,L_M,L_S,total,lr,seconds),
// ckpt_######.nlrc and optim_######.bin every checkpoint_every batches, and
// model.nlrc + optim.bin at the end. On NonFinite the last good checkpoint
// stays in place and the error propagates.
TrainResult train(const Scene& scene, const TrainConfig& cfg, const TrainOutputs& out);

}  // namespace nlr
