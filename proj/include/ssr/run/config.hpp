#pragma once

#include "ssr/eval/eval.hpp"
#include "ssr/model/model.hpp"
#include "ssr/train/train.hpp"
#include "ssr/world/world.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace ssr::run {

// Everything a run needs; written to the output directory before work starts.
struct RunConfig {
  std::string preset = "desk";
  std::uint64_t seed = 0;
  int episodes = 64;          // synthetic episodes for gen-data
  std::int64_t steps = 0;     // optimizer steps; 0 = train.epochs full epochs
  std::string output_dir;
  world::WorldConfig world;
  model::ModelConfig model;
  train::TrainConfig train;
  eval::EvalConfig eval;

  // Copies the shared dimensions (grid, channels, horizon) from the world
  // into the model, then validates every part.
  void finalize();
  void validate() const;
};

void to_json(nlohmann::json& j, const RunConfig& cfg);
void from_json(const nlohmann::json& j, RunConfig& cfg);

const std::vector<std::string>& preset_names();
// ConfigError listing the valid names when `name` is unknown.
RunConfig preset(const std::string& name);

// Deep-merges `overrides` (same layout as to_json) onto `base`.
RunConfig merge(const RunConfig& base, const nlohmann::json& overrides);

}  // namespace ssr::run
