#include "ssr/eval/attention_export.hpp"

#include "ssr/errors.hpp"
#include "ssr/numerics/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

namespace ssr::eval {

void write_pgm16(const std::filesystem::path& path, const Eigen::MatrixXd& image) {
  std::ofstream out(path, std::ios::binary);
  out << "P5\n" << image.cols() << " " << image.rows() << "\n65535\n";
  const double top = image.size() ? image.maxCoeff() : 0.0;
  for (Index r = 0; r < image.rows(); ++r) {
    for (Index c = 0; c < image.cols(); ++c) {
      const double v = top > 0 ? std::clamp(image(r, c) / top, 0.0, 1.0) : 0.0;
      const auto q = static_cast<std::uint16_t>(std::lround(v * 65535));
      out.put(static_cast<char>(q >> 8)).put(static_cast<char>(q & 0xff));
    }
  }
  if (!out) throw FormatError("cannot write " + path.string());
}

void write_csv(const std::filesystem::path& path, const Eigen::MatrixXd& grid) {
  std::ofstream out(path, std::ios::binary);
  char buf[32];
  for (Index r = 0; r < grid.rows(); ++r) {
    for (Index c = 0; c < grid.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", grid(r, c));
      if (c) out << ',';
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw FormatError("cannot write " + path.string());
}

Eigen::MatrixXd read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read " + path.string());
  std::vector<std::vector<double>> rows;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    for (std::string field; std::getline(ss, field, ',');) row.push_back(std::stod(field));
    if (!rows.empty() && row.size() != rows.front().size()) throw FormatError(path.string() + ": ragged rows");
    rows.push_back(std::move(row));
  }
  Eigen::MatrixXd m(static_cast<Index>(rows.size()), rows.empty() ? 0 : static_cast<Index>(rows.front().size()));
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) m(r, c) = rows[r][c];
  }
  return m;
}

AttentionExport export_attention(const std::filesystem::path& dir, const model::ParamStore& params,
                                 const model::ModelConfig& cfg, const SceneSample& sample,
                                 std::optional<NavigationCommand> command) {
  if (!cfg.use_stl) throw ConfigError("model has no scene tokens; nothing to export");
  NoGradScope no_grad;
  model::ForwardOptions opt;
  opt.train_mode = false;
  opt.command = command;
  const auto result = model::forward(sample, params, cfg, opt);
  const auto& scene = *result.output.scene;

  AttentionExport out;
  out.command = command.value_or(sample.command);
  const auto attn = dir / "attention";
  std::filesystem::create_directories(attn);
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(cfg.grid_h, cfg.grid_w);
  auto emit = [&](const std::string& stem, const Eigen::MatrixXd& m) {
    out.files.push_back(attn / (stem + ".pgm"));
    write_pgm16(out.files.back(), m);
    out.files.push_back(attn / (stem + ".csv"));
    write_csv(out.files.back(), m);
  };
  for (int i = 0; i < cfg.num_scene_queries; ++i) {
    const Eigen::MatrixXd m = scene.map(i, cfg.grid_h, cfg.grid_w);
    sum += m;
    char stem[32];
    std::snprintf(stem, sizeof stem, "token_%02d", i);
    emit(stem, m);
  }
  emit("sum", sum);

  Eigen::MatrixXd occ(cfg.grid_h, cfg.grid_w);
  for (int h = 0; h < cfg.grid_h; ++h) {
    for (int w = 0; w < cfg.grid_w; ++w) occ(h, w) = sample.bev_now.at(h, w, world::channel::kOccupancy);
  }
  write_pgm16(dir / "occupancy.pgm", occ);
  write_csv(dir / "occupancy.csv", occ);
  return out;
}

}  // namespace ssr::eval
