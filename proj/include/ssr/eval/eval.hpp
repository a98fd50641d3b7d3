#pragma once

#include "ssr/model/model.hpp"
#include "ssr/world/world.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ssr::eval {

using world::NavigationCommand;
using world::SceneSample;
using world::Trajectory;

enum class CommandOverride { Original, Straight, Left, Right, Random };

const char* override_name(CommandOverride o);
std::optional<CommandOverride> parse_override(const std::string& name);

struct EvalConfig {
  std::vector<double> horizons_s{1.0, 2.0, 3.0};
  // A collision at step i also counts at every later step.
  bool cumulative_collisions = true;
  double ego_length = 4.0;
  double ego_width = 1.8;
  CommandOverride command = CommandOverride::Original;
  std::uint64_t random_command_seed = 0;
  int threads = 1;

  void validate() const;
};

void to_json(nlohmann::json& j, const EvalConfig& cfg);
void from_json(const nlohmann::json& j, EvalConfig& cfg);

struct StepErrors {
  std::vector<double> l2;            // per waypoint, meters
  std::vector<std::uint8_t> collision;  // ego box overlaps future occupancy
  std::vector<std::uint8_t> off_route;  // waypoint cell outside the lane channel
};

// Per-step errors of `pred` against the sample's label and future occupancy.
StepErrors step_errors(const Trajectory& pred, const SceneSample& sample, const world::GridGeometry& grid,
                       double ego_length, double ego_width);

// Horizon seconds -> 1-based step indices. RangeError when a horizon is not a
// positive multiple of dt or lies beyond n_steps.
std::vector<int> horizon_steps(std::span<const double> horizons_s, double dt, int n_steps);

struct Series {
  std::vector<double> avg;  // prefix mean up to each horizon step
  std::vector<double> max;  // value at the horizon step
};

Series protocol_l2(std::span<const double> l2, std::span<const int> steps);
// Indicator series; with `cumulative` a hit persists to all later steps.
Series protocol_cr(std::span<const std::uint8_t> hits, std::span<const int> steps, bool cumulative = true);

struct SampleEval {
  StepErrors errors;
  NavigationCommand label_command = NavigationCommand::GoStraight;
  NavigationCommand used_command = NavigationCommand::GoStraight;
  bool gt_collision = false;
};

// Model predictions for every sample, in sample order. Inference only; params
// are not modified.
std::vector<SampleEval> evaluate_samples(const model::ParamStore& params, const model::ModelConfig& model,
                                         std::span<const SceneSample> samples, const world::GridGeometry& grid,
                                         const EvalConfig& cfg);

struct ProtocolReport {
  std::vector<double> horizons_s;
  Series l2;   // meters
  Series cr;   // percent
  Series ccr;  // percent, lane-departure analog of curb collisions
  int samples = 0;
  int excluded_gt_collision = 0;  // left out of the CR denominators

  static double mean(const std::vector<double>& v);
};

void to_json(nlohmann::json& j, const ProtocolReport& r);

// L2 averages over all samples, CR/CCR over samples whose label is
// collision-free. `keep` selects a subset (e.g. by command).
ProtocolReport summarize(std::span<const SampleEval> evals, const EvalConfig& cfg, double dt,
                         const std::function<bool(const SampleEval&)>& keep = {});

// Table 1 layout: one row per protocol, L2 and CR for each horizon plus Avg.
std::string format_report(const ProtocolReport& r);

// Mean and sample standard deviation of a table cell over seeds.
struct Stat {
  double mean = 0;
  double stddev = 0;
  int n = 0;

  static Stat of(std::span<const double> values);
};

struct Table {
  std::string title;
  std::string label_header;
  std::vector<std::string> groups;  // each group spans the horizon columns plus Avg.
  std::vector<std::string> horizon_labels;
  struct Row {
    std::string label;
    std::vector<Stat> cells;  // groups.size() · (horizons + 1)
  };
  std::vector<Row> rows;
};

std::string format_table(const Table& t);

}  // namespace ssr::eval
