#include "ssr/eval/eval.hpp"

#include "ssr/errors.hpp"
#include "ssr/numerics/rng.hpp"
#include "ssr/numerics/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <numeric>
#include <sstream>
#include <thread>

namespace ssr::eval {

namespace {

struct OverrideName {
  CommandOverride value;
  const char* name;
};
constexpr OverrideName kOverrides[] = {{CommandOverride::Original, "original"},
                                       {CommandOverride::Straight, "straight"},
                                       {CommandOverride::Left, "left"},
                                       {CommandOverride::Right, "right"},
                                       {CommandOverride::Random, "random"}};

std::optional<NavigationCommand> resolve(const EvalConfig& cfg, NavigationCommand label, std::size_t index) {
  switch (cfg.command) {
    case CommandOverride::Original: return std::nullopt;
    case CommandOverride::Straight: return NavigationCommand::GoStraight;
    case CommandOverride::Left: return NavigationCommand::TurnLeft;
    case CommandOverride::Right: return NavigationCommand::TurnRight;
    case CommandOverride::Random: {
      Rng rng(mix_seed(cfg.random_command_seed, index));
      return world::command_from_index(static_cast<int>(rng.below(world::kNumCommands)));
    }
  }
  return label;
}

std::string cell(double v, int precision = 2) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width, bool left = false) {
  if (s.size() >= width) return s;
  return left ? s + std::string(width - s.size(), ' ') : std::string(width - s.size(), ' ') + s;
}

std::string horizon_label(double s) {
  std::ostringstream os;
  os << s << "s";
  return os.str();
}

}  // namespace

const char* override_name(CommandOverride o) {
  for (const auto& e : kOverrides) {
    if (e.value == o) return e.name;
  }
  return "?";
}

std::optional<CommandOverride> parse_override(const std::string& name) {
  for (const auto& e : kOverrides) {
    if (name == e.name) return e.value;
  }
  return std::nullopt;
}

void EvalConfig::validate() const {
  if (horizons_s.empty()) throw ConfigError("eval: horizons list is empty");
  for (double h : horizons_s) {
    if (!(h > 0)) throw ConfigError("eval: horizons must be positive");
  }
  if (!(ego_length > 0) || !(ego_width > 0)) throw ConfigError("eval: ego dimensions must be positive");
  if (threads < 1) throw ConfigError("eval: threads must be >= 1");
}

void to_json(nlohmann::json& j, const EvalConfig& cfg) {
  j = {{"horizons_s", cfg.horizons_s},
       {"cumulative_collisions", cfg.cumulative_collisions},
       {"ego_length", cfg.ego_length},
       {"ego_width", cfg.ego_width},
       {"command_override", override_name(cfg.command)},
       {"random_command_seed", cfg.random_command_seed},
       {"threads", cfg.threads}};
}

void from_json(const nlohmann::json& j, EvalConfig& cfg) {
  cfg.horizons_s = j.value("horizons_s", cfg.horizons_s);
  cfg.cumulative_collisions = j.value("cumulative_collisions", cfg.cumulative_collisions);
  cfg.ego_length = j.value("ego_length", cfg.ego_length);
  cfg.ego_width = j.value("ego_width", cfg.ego_width);
  if (j.contains("command_override")) {
    const auto name = j.at("command_override").get<std::string>();
    const auto o = parse_override(name);
    if (!o) throw ConfigError("eval: unknown command override '" + name + "'");
    cfg.command = *o;
  }
  cfg.random_command_seed = j.value("random_command_seed", cfg.random_command_seed);
  cfg.threads = j.value("threads", cfg.threads);
}

StepErrors step_errors(const Trajectory& pred, const SceneSample& sample, const world::GridGeometry& grid,
                       double ego_length, double ego_width) {
  const Index n = sample.gt_trajectory.rows();
  if (pred.rows() != n) {
    throw DimensionError("step_errors: prediction has " + std::to_string(pred.rows()) + " waypoints, label has " +
                         std::to_string(n));
  }
  if (!(ego_length > 0) || !(ego_width > 0)) throw DomainError("step_errors: ego dimensions must be positive");
  const auto cells = static_cast<std::size_t>(grid.rows) * grid.cols;
  if (sample.future_occupancy.size() != cells * static_cast<std::size_t>(n)) {
    throw DimensionError("step_errors: future occupancy does not match the grid");
  }

  StepErrors out;
  out.l2.resize(n);
  out.collision.resize(n);
  out.off_route.resize(n);
  const auto boxes = world::ego_footprints(pred, ego_length, ego_width);
  std::vector<std::uint8_t> lane;
  const auto& bev = sample.bev_now;
  if (bev.channels > world::channel::kRoute && bev.height == grid.rows && bev.width == grid.cols) {
    lane.resize(cells);
    for (int r = 0; r < grid.rows; ++r) {
      for (int c = 0; c < grid.cols; ++c) lane[static_cast<std::size_t>(r) * grid.cols + c] = bev.at(r, c, world::channel::kRoute) >= 0.5;
    }
  }
  for (Index i = 0; i < n; ++i) {
    out.l2[i] = (pred.row(i) - sample.gt_trajectory.row(i)).norm();
    out.collision[i] = world::footprint_hits(boxes[i], sample.occupancy(static_cast<int>(i)), grid);
    // Departure: the ego box touches no lane cell. Waypoints beyond the
    // raster are not judged.
    const bool inside = grid.cell_of(world::Vec2(pred(i, 0), pred(i, 1))).has_value();
    out.off_route[i] = inside && !lane.empty() && !world::footprint_hits(boxes[i], lane, grid);
  }
  return out;
}

std::vector<int> horizon_steps(std::span<const double> horizons_s, double dt, int n_steps) {
  std::vector<int> steps;
  for (double h : horizons_s) {
    const double k = h / dt;
    const double r = std::round(k);
    if (!(h > 0) || std::abs(k - r) > 1e-9 || r < 1) {
      throw RangeError("horizon " + horizon_label(h) + " is not a positive multiple of the " + horizon_label(dt) +
                       " step");
    }
    if (r > n_steps) {
      throw RangeError("horizon " + horizon_label(h) + " needs step " + std::to_string(static_cast<int>(r)) +
                       " but the trajectory has " + std::to_string(n_steps));
    }
    steps.push_back(static_cast<int>(r));
  }
  return steps;
}

Series protocol_l2(std::span<const double> l2, std::span<const int> steps) {
  Series s;
  for (int t : steps) {
    if (t < 1 || t > static_cast<int>(l2.size())) throw RangeError("protocol_l2: step " + std::to_string(t) + " out of range");
    double acc = 0;
    for (int i = 0; i < t; ++i) acc += l2[i];
    s.avg.push_back(acc / t);
    s.max.push_back(l2[t - 1]);
  }
  return s;
}

Series protocol_cr(std::span<const std::uint8_t> hits, std::span<const int> steps, bool cumulative) {
  std::vector<double> indicator(hits.size());
  bool seen = false;
  for (std::size_t i = 0; i < hits.size(); ++i) {
    seen = cumulative ? (seen || hits[i]) : hits[i] != 0;
    indicator[i] = seen ? 1.0 : 0.0;
  }
  for (int t : steps) {
    if (t < 1 || t > static_cast<int>(hits.size())) throw RangeError("protocol_cr: step " + std::to_string(t) + " out of range");
  }
  return protocol_l2(indicator, steps);
}

std::vector<SampleEval> evaluate_samples(const model::ParamStore& params, const model::ModelConfig& model,
                                         std::span<const SceneSample> samples, const world::GridGeometry& grid,
                                         const EvalConfig& cfg) {
  cfg.validate();
  std::vector<SampleEval> out(samples.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    NoGradScope no_grad;
    for (std::size_t i = begin; i < end; ++i) {
      const SceneSample& s = samples[i];
      model::ForwardOptions opt;
      opt.train_mode = false;
      opt.command = resolve(cfg, s.command, i);
      const auto result = model::forward(s, params, model, opt);
      SampleEval& e = out[i];
      e.errors = step_errors(result.output.trajectory(), s, grid, cfg.ego_length, cfg.ego_width);
      e.label_command = s.command;
      e.used_command = opt.command.value_or(s.command);
      e.gt_collision = s.gt_collision;
    }
  };
  const std::size_t n = samples.size();
  const auto threads = std::min<std::size_t>(static_cast<std::size_t>(cfg.threads), std::max<std::size_t>(n, 1));
  if (threads <= 1) {
    work(0, n);
    return out;
  }
  // Disjoint slices; every sample is written by exactly one thread.
  std::vector<std::exception_ptr> failed(threads);
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          work(n * t / threads, n * (t + 1) / threads);
        } catch (...) {
          failed[t] = std::current_exception();
        }
      });
    }
  }
  for (const auto& e : failed) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

double ProtocolReport::mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

void to_json(nlohmann::json& j, const ProtocolReport& r) {
  auto series = [](const Series& s) {
    return nlohmann::json{{"avg", s.avg}, {"max", s.max}, {"avg_mean", ProtocolReport::mean(s.avg)},
                          {"max_mean", ProtocolReport::mean(s.max)}};
  };
  j = {{"horizons_s", r.horizons_s}, {"l2_m", series(r.l2)},     {"cr_percent", series(r.cr)},
       {"ccr_percent", series(r.ccr)}, {"samples", r.samples}, {"excluded_gt_collision", r.excluded_gt_collision}};
}

ProtocolReport summarize(std::span<const SampleEval> evals, const EvalConfig& cfg, double dt,
                         const std::function<bool(const SampleEval&)>& keep) {
  ProtocolReport r;
  r.horizons_s = cfg.horizons_s;
  const std::size_t k = cfg.horizons_s.size();
  for (Series* s : {&r.l2, &r.cr, &r.ccr}) {
    s->avg.assign(k, 0.0);
    s->max.assign(k, 0.0);
  }
  if (evals.empty()) return r;
  const auto steps = horizon_steps(cfg.horizons_s, dt, static_cast<int>(evals.front().errors.l2.size()));

  int counted = 0;
  auto add = [k](Series& into, const Series& s) {
    for (std::size_t h = 0; h < k; ++h) {
      into.avg[h] += s.avg[h];
      into.max[h] += s.max[h];
    }
  };
  for (const SampleEval& e : evals) {
    if (keep && !keep(e)) continue;
    ++r.samples;
    add(r.l2, protocol_l2(e.errors.l2, steps));
    if (e.gt_collision) {
      ++r.excluded_gt_collision;
      continue;
    }
    ++counted;
    add(r.cr, protocol_cr(e.errors.collision, steps, cfg.cumulative_collisions));
    add(r.ccr, protocol_cr(e.errors.off_route, steps, cfg.cumulative_collisions));
  }
  auto scale = [](Series& s, double f) {
    for (double& v : s.avg) v *= f;
    for (double& v : s.max) v *= f;
  };
  if (r.samples > 0) scale(r.l2, 1.0 / r.samples);
  if (counted > 0) {
    scale(r.cr, 100.0 / counted);
    scale(r.ccr, 100.0 / counted);
  }
  return r;
}

std::string format_report(const ProtocolReport& r) {
  Table t;
  t.title = "samples " + std::to_string(r.samples) + ", gt_collision excluded from CR " +
            std::to_string(r.excluded_gt_collision);
  t.label_header = "Protocol";
  t.groups = {"L2 (m)", "Collision Rate (%)", "CCR (%)"};
  for (double h : r.horizons_s) t.horizon_labels.push_back(horizon_label(h));
  for (bool use_max : {true, false}) {
    Table::Row row{use_max ? "MAX" : "AVG", {}};
    for (const Series* s : {&r.l2, &r.cr, &r.ccr}) {
      const auto& v = use_max ? s->max : s->avg;
      for (double x : v) row.cells.push_back({x, 0, 1});
      row.cells.push_back({ProtocolReport::mean(v), 0, 1});
    }
    t.rows.push_back(std::move(row));
  }
  return format_table(t);
}

Stat Stat::of(std::span<const double> values) {
  Stat s;
  s.n = static_cast<int>(values.size());
  if (s.n == 0) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / s.n;
  if (s.n > 1) {
    double ss = 0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / (s.n - 1));
  }
  return s;
}

std::string format_table(const Table& t) {
  const std::size_t per_group = t.horizon_labels.size() + 1;
  auto text = [](const Stat& s) { return s.n > 1 ? cell(s.mean) + "±" + cell(s.stddev) : cell(s.mean); };

  std::size_t label_w = t.label_header.size();
  std::size_t cell_w = 5;
  for (const auto& row : t.rows) {
    label_w = std::max(label_w, row.label.size());
    // ± is two bytes in UTF-8 but one column wide.
    for (const auto& c : row.cells) cell_w = std::max(cell_w, text(c).size() - (c.n > 1 ? 1 : 0));
  }
  const std::size_t group_w = per_group * (cell_w + 1) - 1;
  for (const auto& g : t.groups) {
    if (g.size() > group_w) cell_w += (g.size() - group_w + per_group - 1) / per_group;
  }
  const std::size_t gw = per_group * (cell_w + 1) - 1;

  std::ostringstream os;
  if (!t.title.empty()) os << t.title << "\n";
  os << pad("", label_w, true);
  for (const auto& g : t.groups) {
    const std::size_t left = (gw - std::min(gw, g.size())) / 2;
    os << " | " << std::string(left, ' ') << pad(g, gw - left, true);
  }
  os << "\n" << pad(t.label_header, label_w, true);
  for (std::size_t g = 0; g < t.groups.size(); ++g) {
    os << " |";
    for (const auto& h : t.horizon_labels) os << " " << pad(h, cell_w);
    os << " " << pad("Avg.", cell_w);
  }
  os << "\n" << std::string(label_w, '-');
  for (std::size_t g = 0; g < t.groups.size(); ++g) os << "-+-" << std::string(gw, '-');
  os << "\n";
  for (const auto& row : t.rows) {
    os << pad(row.label, label_w, true);
    for (std::size_t c = 0; c < row.cells.size(); ++c) {
      if (c % per_group == 0) os << " |";
      const auto s = text(row.cells[c]);
      os << " " << pad(s, cell_w + (row.cells[c].n > 1 ? 1 : 0));
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace ssr::eval
