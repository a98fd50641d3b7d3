#include "ssr/world/dataset.hpp"

#include "ssr/errors.hpp"
#include "ssr/numerics/archive.hpp"

#include <fstream>

namespace ssr::world {
namespace {

constexpr const char* kFormat = "ssr-dataset";
constexpr int kVersion = 1;

std::size_t feature_floats(const WorldConfig& c) {
  return 2 * static_cast<std::size_t>(c.grid_h) * c.grid_w * c.channels + 2 * static_cast<std::size_t>(c.horizon_steps);
}

std::size_t occupancy_bytes(const WorldConfig& c) {
  return static_cast<std::size_t>(c.horizon_steps) * c.grid_h * c.grid_w;
}

template <typename T>
T field(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw FormatError(where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw FormatError(where + ": field '" + key + "' has the wrong type");
  }
}

}  // namespace

void to_json(nlohmann::json& j, const WorldConfig& c) {
  j = nlohmann::json{{"bev_extent_m", c.bev_extent_m},
                     {"grid_h", c.grid_h},
                     {"grid_w", c.grid_w},
                     {"channels", c.channels},
                     {"horizon_steps", c.horizon_steps},
                     {"step_dt", c.step_dt},
                     {"min_obstacles", c.min_obstacles},
                     {"max_obstacles", c.max_obstacles},
                     {"noise_std", c.noise_std},
                     {"min_speed", c.min_speed},
                     {"max_speed", c.max_speed},
                     {"history_frames", c.history_frames},
                     {"samples_per_episode", c.samples_per_episode},
                     {"lane_half_width", c.lane_half_width},
                     {"pedestrian_fraction", c.pedestrian_fraction},
                     {"occupancy_includes_pedestrians", c.occupancy_includes_pedestrians},
                     {"straight_curvature_jitter", c.straight_curvature_jitter},
                     {"ego_length", c.ego_length},
                     {"ego_width", c.ego_width}};
}

void from_json(const nlohmann::json& j, WorldConfig& c) {
  auto opt = [&j](const char* key, auto& value) {
    if (j.contains(key)) j.at(key).get_to(value);
  };
  opt("bev_extent_m", c.bev_extent_m);
  opt("grid_h", c.grid_h);
  opt("grid_w", c.grid_w);
  opt("channels", c.channels);
  opt("horizon_steps", c.horizon_steps);
  opt("step_dt", c.step_dt);
  opt("min_obstacles", c.min_obstacles);
  opt("max_obstacles", c.max_obstacles);
  opt("noise_std", c.noise_std);
  opt("min_speed", c.min_speed);
  opt("max_speed", c.max_speed);
  opt("history_frames", c.history_frames);
  opt("samples_per_episode", c.samples_per_episode);
  opt("lane_half_width", c.lane_half_width);
  opt("pedestrian_fraction", c.pedestrian_fraction);
  opt("occupancy_includes_pedestrians", c.occupancy_includes_pedestrians);
  opt("straight_curvature_jitter", c.straight_curvature_jitter);
  opt("ego_length", c.ego_length);
  opt("ego_width", c.ego_width);
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  const WorldConfig& cfg = dataset.config;
  cfg.validate();
  std::filesystem::create_directories(dir);
  std::ofstream features(dir / "features.bin", std::ios::binary | std::ios::trunc);
  std::ofstream occupancy(dir / "occupancy.bin", std::ios::binary | std::ios::trunc);
  if (!features || !occupancy) throw FormatError("cannot write dataset in " + dir.string());

  const std::size_t nf = feature_floats(cfg);
  const std::size_t nb = occupancy_bytes(cfg);
  nlohmann::json records = nlohmann::json::array();
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    const SceneSample& s = dataset.samples[i];
    if (s.bev_now.height != cfg.grid_h || s.bev_now.width != cfg.grid_w || s.bev_now.channels != cfg.channels ||
        s.horizon() != cfg.horizon_steps || s.future_occupancy.size() != nb) {
      throw DimensionError("sample " + std::to_string(i) + " does not match the dataset config");
    }
    write_f64(features, s.bev_now.data.data(), static_cast<std::size_t>(s.bev_now.data.size()));
    write_f64(features, s.bev_next.data.data(), static_cast<std::size_t>(s.bev_next.data.size()));
    write_f64(features, s.gt_trajectory.data(), static_cast<std::size_t>(s.gt_trajectory.size()));
    occupancy.write(reinterpret_cast<const char*>(s.future_occupancy.data()), static_cast<std::streamsize>(nb));
    records.push_back({{"episode_seed", s.episode_seed},
                       {"frame", s.frame},
                       {"command", command_index(s.command)},
                       {"gt_collision", s.gt_collision},
                       {"clipped", s.clipped},
                       {"feature_offset", i * nf * 8},
                       {"occupancy_offset", i * nb}});
  }
  nlohmann::json manifest{{"format", kFormat},
                          {"version", kVersion},
                          {"world_config", cfg},
                          {"sample_count", dataset.samples.size()},
                          {"seeds", dataset.seeds},
                          {"feature_record_floats", nf},
                          {"occupancy_record_bytes", nb},
                          {"records", records}};
  std::ofstream(dir / "manifest.json", std::ios::trunc) << manifest.dump(1) << '\n';
  if (!features || !occupancy) throw FormatError("write failed in " + dir.string());
}

Dataset read_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw FormatError("missing manifest.json in " + dir.string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest.json: ") + e.what());
  }
  const std::string where = "manifest.json";
  if (field<std::string>(manifest, "format", where) != kFormat) throw FormatError(where + ": field 'format' is not " + kFormat);
  if (field<int>(manifest, "version", where) != kVersion) throw FormatError(where + ": unsupported 'version'");

  Dataset ds;
  try {
    ds.config = manifest.at("world_config").get<WorldConfig>();
    ds.config.validate();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(where + ": field 'world_config': " + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(where + ": field 'world_config': " + e.what());
  }
  const WorldConfig& cfg = ds.config;
  ds.seeds = field<std::vector<std::uint64_t>>(manifest, "seeds", where);
  const auto count = field<std::size_t>(manifest, "sample_count", where);
  const auto nf = field<std::size_t>(manifest, "feature_record_floats", where);
  const auto nb = field<std::size_t>(manifest, "occupancy_record_bytes", where);
  if (nf != feature_floats(cfg)) {
    throw FormatError(where + ": field 'feature_record_floats' = " + std::to_string(nf) + ", config implies " +
                      std::to_string(feature_floats(cfg)));
  }
  if (nb != occupancy_bytes(cfg)) {
    throw FormatError(where + ": field 'occupancy_record_bytes' = " + std::to_string(nb) + ", config implies " +
                      std::to_string(occupancy_bytes(cfg)));
  }
  const auto records = field<nlohmann::json>(manifest, "records", where);
  if (!records.is_array() || records.size() != count) {
    throw FormatError(where + ": field 'sample_count' = " + std::to_string(count) + " but " +
                      std::to_string(records.is_array() ? records.size() : 0) + " records stored");
  }

  auto blob_size = [&dir](const char* name) {
    if (!std::filesystem::exists(dir / name)) throw FormatError(std::string("missing ") + name + " in " + dir.string());
    return std::filesystem::file_size(dir / name);
  };
  const auto features_size = blob_size("features.bin");
  const auto occupancy_size = blob_size("occupancy.bin");
  if (features_size != count * nf * 8) {
    throw FormatError("features.bin: size " + std::to_string(features_size) + " bytes, expected " +
                      std::to_string(count * nf * 8) + " for sample_count " + std::to_string(count));
  }
  if (occupancy_size != count * nb) {
    throw FormatError("occupancy.bin: size " + std::to_string(occupancy_size) + " bytes, expected " +
                      std::to_string(count * nb) + " for sample_count " + std::to_string(count));
  }

  std::ifstream features(dir / "features.bin", std::ios::binary);
  std::ifstream occupancy(dir / "occupancy.bin", std::ios::binary);
  const Index bev_size = Index{cfg.grid_h} * cfg.grid_w * cfg.channels;
  ds.samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto& r = records[i];
    const std::string rw = where + " record " + std::to_string(i);
    if (field<std::size_t>(r, "feature_offset", rw) != i * nf * 8) throw FormatError(rw + ": field 'feature_offset' out of sequence");
    if (field<std::size_t>(r, "occupancy_offset", rw) != i * nb) throw FormatError(rw + ": field 'occupancy_offset' out of sequence");
    SceneSample s;
    s.episode_seed = field<std::uint64_t>(r, "episode_seed", rw);
    s.frame = field<int>(r, "frame", rw);
    const int cmd = field<int>(r, "command", rw);
    if (cmd < 0 || cmd >= kNumCommands) throw FormatError(rw + ": field 'command' = " + std::to_string(cmd));
    s.command = command_from_index(cmd);
    s.gt_collision = field<bool>(r, "gt_collision", rw);
    s.clipped = field<bool>(r, "clipped", rw);
    s.bev_now = BevFeature(cfg.grid_h, cfg.grid_w, cfg.channels);
    s.bev_next = BevFeature(cfg.grid_h, cfg.grid_w, cfg.channels);
    s.gt_trajectory.resize(cfg.horizon_steps, 2);
    read_f64(features, s.bev_now.data.data(), static_cast<std::size_t>(bev_size));
    read_f64(features, s.bev_next.data.data(), static_cast<std::size_t>(bev_size));
    read_f64(features, s.gt_trajectory.data(), static_cast<std::size_t>(s.gt_trajectory.size()));
    s.future_occupancy.resize(nb);
    occupancy.read(reinterpret_cast<char*>(s.future_occupancy.data()), static_cast<std::streamsize>(nb));
    if (static_cast<std::size_t>(occupancy.gcount()) != nb) throw FormatError("occupancy.bin truncated at record " + std::to_string(i));
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace ssr::world
