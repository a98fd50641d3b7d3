#pragma once

#include "ssr/eval/eval.hpp"
#include "ssr/train/train.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace ssr::eval {

enum class Suite { Components, QueryCount, Navigation, Commands };

const std::vector<std::string>& suite_names();
// Accepts "query_count" and "query-count".
std::optional<Suite> parse_suite(const std::string& name);
const char* suite_name(Suite s);

struct AblationSetup {
  model::ModelConfig model;
  train::TrainConfig train;
  EvalConfig eval;
  world::GridGeometry grid;
  double step_dt = 0.5;
  std::span<const SceneSample> train_set;
  std::span<const SceneSample> test_set;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::int64_t steps = 2000;
  std::vector<int> query_counts{8, 16, 32, 64};
  // Tables report the MAX protocol unless this is set.
  bool use_avg_protocol = false;
  // Trainings run concurrently up to this many at a time.
  int threads = 1;
  std::function<void(const std::string&)> progress;
};

// Trained parameters keyed by (model, train config, seed), so suites that
// share a configuration train it once.
class TrainCache {
 public:
  std::shared_ptr<const model::ParamStore> find(const std::string& key) const;
  void put(const std::string& key, std::shared_ptr<const model::ParamStore> params);

 private:
  std::map<std::string, std::shared_ptr<const model::ParamStore>> entries_;
};

struct AblationRun {
  std::string row;
  std::uint64_t seed = 0;
  ProtocolReport report;
  std::optional<ProtocolReport> straight;  // navigation suite: GS split
  std::optional<ProtocolReport> turning;   // navigation suite: LR split
  double final_loss = 0;
  bool halted = false;
};

struct AblationReport {
  Suite suite = Suite::Components;
  Table table;
  std::vector<AblationRun> runs;
  std::vector<std::string> notes;  // e.g. the directional CR comparison

  std::string text() const;
  // One JSON object per run plus one per table row.
  std::vector<nlohmann::json> records() const;
};

AblationReport run_ablation(Suite suite, const AblationSetup& setup, TrainCache* cache = nullptr);

}  // namespace ssr::eval
