#pragma once

#include "ssr/numerics/attention.hpp"
#include "ssr/numerics/grad_check.hpp"
#include "ssr/numerics/tensor.hpp"
#include "ssr/world/world.hpp"

#include <json.hpp>

#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace ssr::model {

using world::BevFeature;
using world::NavigationCommand;
using world::SceneSample;
using world::Trajectory;

struct ModelConfig {
  int grid_h = 32;
  int grid_w = 32;
  int channels = 16;           // C
  int num_scene_queries = 8;   // N_s
  int num_modes = 3;           // N_m, one per navigation command
  int horizon_steps = 6;       // N_t
  int self_attn_layers = 2;
  int ffp_attn_layers = 2;
  int attn_heads = 2;
  int cmd_embed_dim = 8;
  int se_hidden = 16;
  int ffn_hidden = 32;
  int head_hidden = 32;
  int mln_hidden = 32;
  int fuser_hidden = 16;
  // Multiplies the trajectory head output so unit-scale activations reach
  // meter-scale waypoints.
  double waypoint_scale = 10.0;
  bool use_stl = true;         // false: waypoint queries attend the flattened BEV
  bool use_navigation = true;  // false: SE gate ignores the command

  void validate() const;
  Index cells() const { return Index{grid_h} * grid_w; }
};

void to_json(nlohmann::json& j, const ModelConfig& cfg);
// Missing keys keep their defaults.
void from_json(const nlohmann::json& j, ModelConfig& cfg);

// Named parameter tensors in a fixed registration order.
class ParamStore {
 public:
  const Tensor& add(const std::string& name, Tensor tensor);
  const Tensor& operator[](const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::span<const NamedTensor> entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  Index scalar_count() const;
  void set_requires_grad(bool on) const;
  void zero_grad() const;
  // Deep copy with fresh storages.
  ParamStore clone() const;

 private:
  std::vector<NamedTensor> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Uniform ±1/sqrt(fan_in) weights and biases, zero attention/FFN output
// projections, unit layer-norm gains, N(0, 0.02²) command embeddings.
ParamStore init_params(const ModelConfig& cfg, std::uint64_t seed);

struct SceneQuerySet {
  Tensor tokens;  // N_s×C
  Tensor maps;    // (H·W)×N_s, column i is the spatial attention map of token i

  // Map of token i as an H×W grid (row 0 = forward edge).
  RowMatrix map(Index token, int grid_h, int grid_w) const;
};

struct ForwardOutput {
  Tensor bev_navi;                    // (H·W)×C
  std::optional<SceneQuerySet> scene; // absent when use_stl is false
  Tensor all_modes;                   // N_m×(2·N_t), row m holds x0,y0,x1,y1,...
  Tensor selected;                    // N_t×2
  // Training branch only; valid when has_prediction is set.
  bool has_prediction = false;
  Tensor dreaming;                    // N_s×C
  Tensor predicted_future_tokens;     // N_s×C
  Tensor predicted_bev;               // (H·W)×C
  Tensor fuser_weights;               // (H·W)×N_s

  Trajectory trajectory() const;
  Trajectory mode(Index m) const;
};

struct LossWeights {
  double imitation = 1.0;
  double bev = 1.0;
};

struct Losses {
  Tensor imitation;
  Tensor bev;  // empty when the training branch did not run
  Tensor total;
  bool has_bev = false;
};

struct ForwardOptions {
  bool train_mode = true;
  LossWeights weights;
  // Replaces the sample's command (evaluation-time override).
  std::optional<NavigationCommand> command;
};

struct ForwardResult {
  ForwardOutput output;
  Losses losses;
};

Tensor se_fuse(const Tensor& bev, NavigationCommand cmd, const ParamStore& params, const ModelConfig& cfg);
SceneQuerySet stl_tokens(const Tensor& bev_navi, const ParamStore& params, const ModelConfig& cfg);
// `layers` pre-norm self-attention + feed-forward blocks named `prefix`.0, `prefix`.1, ...
Tensor self_attn_stack(const Tensor& tokens, const ParamStore& params, const ModelConfig& cfg,
                       const std::string& prefix, int layers);
Tensor scene_self_attn(const Tensor& tokens, const ParamStore& params, const ModelConfig& cfg);
// Returns (all modes N_m×(2·N_t), selected N_t×2). `memory` is the scene
// tokens, or the flattened BEV when use_stl is false.
std::pair<Tensor, Tensor> plan_decode(const Tensor& memory, NavigationCommand cmd, const ParamStore& params,
                                      const ModelConfig& cfg);
Tensor loss_imitation(const Tensor& selected, const Tensor& gt);
Tensor mln(const Tensor& tokens, const Tensor& trajectory, const ParamStore& params, const ModelConfig& cfg);
Tensor predict_future(const Tensor& dreaming, const ParamStore& params, const ModelConfig& cfg);
// Returns (predicted BEV (H·W)×C, fuser weights (H·W)×N_s).
std::pair<Tensor, Tensor> token_fuser(const Tensor& pred_tokens, const Tensor& bev_now, const ParamStore& params,
                                      const ModelConfig& cfg);
Tensor loss_bev(const Tensor& pred, const Tensor& target);

// The training branch runs when train_mode is set, use_stl is on and the BEV
// loss weight is nonzero.
ForwardResult forward(const SceneSample& sample, const ParamStore& params, const ModelConfig& cfg,
                      const ForwardOptions& options = {});

// Model input checks shared by the CLI: throws DimensionError naming both sides.
void check_compatible(const ModelConfig& model, const world::WorldConfig& world);

Tensor trajectory_tensor(const Trajectory& traj);

}  // namespace ssr::model
