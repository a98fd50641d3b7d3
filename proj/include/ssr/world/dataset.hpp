#pragma once

#include "ssr/world/world.hpp"

#include <json.hpp>

#include <filesystem>
#include <vector>

namespace ssr::world {

void to_json(nlohmann::json& j, const WorldConfig& cfg);
// Missing keys keep their defaults.
void from_json(const nlohmann::json& j, WorldConfig& cfg);

struct Dataset {
  WorldConfig config;
  std::vector<std::uint64_t> seeds;  // episode seeds
  std::vector<SceneSample> samples;
};

// Directory layout (see docs/dataset_format.md):
//   manifest.json   config, counts, seed list, per-record offsets and labels
//   features.bin    per record: bev_now, bev_next (H·W·C each), gt (N_t·2), LE float64
//   occupancy.bin   per record: N_t·H·W bytes (0/1)
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);
// Throws FormatError naming the offending field on any inconsistency.
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace ssr::world
