#pragma once

#include "ssr/model/model.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <optional>
#include <vector>

namespace ssr::eval {

using world::NavigationCommand;
using world::SceneSample;

// 16-bit binary PGM (big-endian), scaled so the maximum maps to 65535.
void write_pgm16(const std::filesystem::path& path, const Eigen::MatrixXd& image);
// One grid row per line, full double precision.
void write_csv(const std::filesystem::path& path, const Eigen::MatrixXd& grid);
Eigen::MatrixXd read_csv(const std::filesystem::path& path);

struct AttentionExport {
  std::vector<std::filesystem::path> files;  // attention/token_XX.{pgm,csv}, attention/sum.{pgm,csv}
  NavigationCommand command = NavigationCommand::GoStraight;
};

// Writes the N_s token maps and their sum below dir/attention, plus the
// sample's occupancy channel as dir/occupancy.{pgm,csv} for orientation.
// Row 0 is the forward edge, so images are forward-up with the ego centered.
// ConfigError when the model has no scene tokens.
AttentionExport export_attention(const std::filesystem::path& dir, const model::ParamStore& params,
                                 const model::ModelConfig& cfg, const SceneSample& sample,
                                 std::optional<NavigationCommand> command = std::nullopt);

}  // namespace ssr::eval
