#pragma once

#include "ssr/model/model.hpp"
#include "ssr/numerics/rng.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace ssr::train {

using model::ModelConfig;
using model::ParamStore;
using world::SceneSample;

struct TrainConfig {
  double learning_rate = 1e-3;
  double weight_decay = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int epochs = 10;
  int batch_size = 8;
  double grad_clip_norm = 0;  // 0 disables clipping
  std::uint64_t seed = 0;
  double loss_weight_imi = 1.0;
  double loss_weight_bev = 1.0;
  int checkpoint_every = 0;  // steps; 0 = only at the end

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& cfg);
// Missing keys keep their defaults.
void from_json(const nlohmann::json& j, TrainConfig& cfg);

struct TrainState {
  std::int64_t step = 0;
  int epoch = 0;
  int batch_in_epoch = 0;
  // Generator state at the start of the current epoch; the epoch's
  // permutation is drawn from it, so a resumed run can rebuild it.
  std::string epoch_rng;
  std::vector<Vector> m;  // first moments, parameter order
  std::vector<Vector> v;  // second moments
};

// Bias-corrected AdamW with decoupled decay: p -= lr·wd·p, then the moment
// update. Increments state.step. Throws NumericalError naming the first
// parameter with a non-finite gradient, before anything is modified.
void adamw_step(const ParamStore& params, TrainState& state, const TrainConfig& cfg);

// Rescales all gradients so their global L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_grad_norm(const ParamStore& params, double max_norm);
double grad_norm(const ParamStore& params);

struct StepRecord {
  std::int64_t step = 0;  // optimizer steps completed after this one
  int epoch = 0;
  double imitation = 0;
  double bev = 0;
  double total = 0;
  double grad_norm = 0;
  double wall_seconds = 0;
};

void to_json(nlohmann::json& j, const StepRecord& r);

struct TrainOptions {
  // Checkpoints (checkpoints/step-NNNNNNNN) and metrics.jsonl go here; empty
  // disables all file output.
  std::filesystem::path run_dir;
  std::function<void(const StepRecord&)> on_step;
};

struct TrainResult {
  std::vector<StepRecord> log;
  bool halted = false;  // non-finite loss or gradient
  std::string halt_reason;
  std::filesystem::path last_checkpoint;
};

class Trainer {
 public:
  Trainer(ModelConfig model, TrainConfig cfg, ParamStore params, std::span<const SceneSample> data);

  // One optimizer step over the next batch. Throws NumericalError (without
  // touching params or state) on a non-finite loss or gradient.
  StepRecord step();
  // Steps until state().step == total_steps.
  TrainResult run(std::int64_t total_steps, const TrainOptions& options = {});

  std::int64_t steps_per_epoch() const;
  const ParamStore& params() const { return params_; }
  const TrainState& state() const { return state_; }
  const ModelConfig& model_config() const { return model_; }
  const TrainConfig& config() const { return cfg_; }

  void save(const std::filesystem::path& dir) const;
  static Trainer load(const std::filesystem::path& dir, std::span<const SceneSample> data);

 private:
  void start_epoch();

  ModelConfig model_;
  TrainConfig cfg_;
  ParamStore params_;
  std::span<const SceneSample> data_;
  TrainState state_;
  std::vector<std::size_t> order_;
  std::string next_epoch_rng_;
};

struct Checkpoint {
  ModelConfig model;
  TrainConfig train;
  ParamStore params;
  TrainState state;
};

void save_checkpoint(const std::filesystem::path& dir, const ModelConfig& model, const TrainConfig& train,
                     const ParamStore& params, const TrainState& state);
// Throws FormatError on archive problems, DimensionError naming the parameter
// when a stored shape disagrees with `expected` (or the stored config).
Checkpoint load_checkpoint(const std::filesystem::path& dir, const ModelConfig* expected = nullptr);

// Newest checkpoint directory below run_dir/checkpoints, or empty.
std::filesystem::path latest_checkpoint(const std::filesystem::path& run_dir);

}  // namespace ssr::train
