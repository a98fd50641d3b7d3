#pragma once

#include "ssr/model/model.hpp"
#include "ssr/numerics/rng.hpp"
#include "ssr/world/world.hpp"

namespace ssr::testing {

// Smallest configuration used by the gradient checks.
inline model::ModelConfig tiny_grad_config() {
  model::ModelConfig cfg;
  cfg.grid_h = cfg.grid_w = 8;
  cfg.channels = 8;
  cfg.num_scene_queries = 4;
  cfg.num_modes = 3;
  cfg.horizon_steps = 6;
  cfg.attn_heads = 2;
  cfg.cmd_embed_dim = 4;
  cfg.se_hidden = 6;
  cfg.ffn_hidden = 8;
  cfg.head_hidden = 8;
  cfg.mln_hidden = 6;
  cfg.fuser_hidden = 6;
  cfg.waypoint_scale = 2.0;
  return cfg;
}

// Small synthetic world and a model sized to it, for fast training tests.
inline world::WorldConfig small_world() {
  world::WorldConfig w;
  w.grid_h = w.grid_w = 8;
  w.channels = 10;
  return w;
}

inline model::ModelConfig small_model() {
  model::ModelConfig m = tiny_grad_config();
  m.channels = 10;
  return m;
}

// Adds U(-amount, amount) to every parameter so that zero-initialized
// projections and unit gains become generic.
inline void perturb(const model::ParamStore& params, Rng& rng, double amount = 0.3) {
  for (const auto& e : params.entries()) {
    Tensor t = e.tensor;
    for (Index i = 0; i < t.size(); ++i) t.mutable_value()[i] += rng.uniform(-amount, amount);
  }
}

inline world::BevFeature random_bev(Rng& rng, int h, int w, int c) {
  world::BevFeature bev(h, w, c);
  for (Index i = 0; i < bev.data.size(); ++i) bev.data[i] = rng.uniform(-1.0, 1.0);
  return bev;
}

inline world::SceneSample random_sample(Rng& rng, const model::ModelConfig& cfg) {
  world::SceneSample s;
  s.bev_now = random_bev(rng, cfg.grid_h, cfg.grid_w, cfg.channels);
  s.bev_next = random_bev(rng, cfg.grid_h, cfg.grid_w, cfg.channels);
  s.command = world::command_from_index(static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.num_modes))));
  s.gt_trajectory.resize(cfg.horizon_steps, 2);
  for (Index i = 0; i < s.gt_trajectory.size(); ++i) s.gt_trajectory.data()[i] = rng.uniform(-3.0, 3.0);
  s.future_occupancy.assign(static_cast<std::size_t>(cfg.horizon_steps * cfg.grid_h * cfg.grid_w), 0);
  return s;
}

}  // namespace ssr::testing
