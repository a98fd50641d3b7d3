#include "ssr/run/config.hpp"

#include "ssr/errors.hpp"
#include "ssr/world/dataset.hpp"

namespace ssr::run {

void RunConfig::finalize() {
  model.grid_h = world.grid_h;
  model.grid_w = world.grid_w;
  model.channels = world.channels;
  model.horizon_steps = world.horizon_steps;
  validate();
}

void RunConfig::validate() const {
  if (episodes < 1) throw ConfigError("episodes must be >= 1");
  if (steps < 0) throw ConfigError("steps must be >= 0");
  world.validate();
  model.validate();
  train.validate();
  eval.validate();
  model::check_compatible(model, world);
}

void to_json(nlohmann::json& j, const RunConfig& cfg) {
  j = {{"preset", cfg.preset},   {"seed", cfg.seed},   {"episodes", cfg.episodes},
       {"steps", cfg.steps},     {"output_dir", cfg.output_dir},
       {"world", cfg.world},     {"model", cfg.model}, {"train", cfg.train},
       {"eval", cfg.eval}};
}

void from_json(const nlohmann::json& j, RunConfig& cfg) {
  cfg.preset = j.value("preset", cfg.preset);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.episodes = j.value("episodes", cfg.episodes);
  cfg.steps = j.value("steps", cfg.steps);
  cfg.output_dir = j.value("output_dir", cfg.output_dir);
  if (j.contains("world")) from_json(j.at("world"), cfg.world);
  if (j.contains("model")) from_json(j.at("model"), cfg.model);
  if (j.contains("train")) from_json(j.at("train"), cfg.train);
  if (j.contains("eval")) from_json(j.at("eval"), cfg.eval);
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"tiny", "desk", "paper-scale"};
  return names;
}

RunConfig preset(const std::string& name) {
  RunConfig c;
  c.preset = name;
  if (name == "desk") {
    // struct defaults
  } else if (name == "tiny") {
    c.world.grid_h = c.world.grid_w = 16;
    c.world.channels = 16;
    c.episodes = 16;  // 64 samples
    c.model.num_scene_queries = 8;
    c.model.self_attn_layers = 1;
    c.model.ffp_attn_layers = 1;
    c.steps = 2000;
  } else if (name == "paper-scale") {
    c.world.grid_h = c.world.grid_w = 100;
    c.world.channels = 256;
    c.model.num_scene_queries = 16;
    c.model.attn_heads = 8;
    c.model.cmd_embed_dim = 32;
    c.model.se_hidden = 64;
    c.model.ffn_hidden = 512;
    c.model.head_hidden = 256;
    c.model.mln_hidden = 256;
    c.model.fuser_hidden = 64;
    c.train.learning_rate = 5e-5;
    c.train.loss_weight_imi = 1.0;
    c.train.loss_weight_bev = 1.0;
    c.train.batch_size = 8;
  } else {
    std::string list;
    for (const auto& n : preset_names()) list += (list.empty() ? "" : ", ") + n;
    throw ConfigError("unknown preset '" + name + "' (valid: " + list + ")");
  }
  c.finalize();
  return c;
}

RunConfig merge(const RunConfig& base, const nlohmann::json& overrides) {
  nlohmann::json j = base;
  j.merge_patch(overrides);
  return j.get<RunConfig>();
}

}  // namespace ssr::run
