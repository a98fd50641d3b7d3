#include "ssr/eval/ablation.hpp"

#include "ssr/errors.hpp"

#include <atomic>
#include <exception>
#include <sstream>
#include <thread>

namespace ssr::eval {

namespace {

struct Variant {
  std::string label;
  model::ModelConfig model;
  train::TrainConfig train;
};

struct Job {
  std::size_t variant = 0;
  std::uint64_t seed = 0;
  std::string key;
  std::shared_ptr<const model::ParamStore> params;
  double final_loss = 0;
  bool halted = false;
};

std::vector<Variant> variants_for(Suite suite, const AblationSetup& s) {
  std::vector<Variant> v;
  auto add = [&](std::string label, auto edit) {
    Variant x{std::move(label), s.model, s.train};
    edit(x);
    v.push_back(std::move(x));
  };
  switch (suite) {
    case Suite::Components:
      add("none", [](Variant& x) { x.model.use_stl = false; });
      add("STL", [](Variant& x) { x.train.loss_weight_bev = 0; });
      add("STL + FFP", [](Variant&) {});
      break;
    case Suite::QueryCount:
      for (int n : s.query_counts) add(std::to_string(n), [n](Variant& x) { x.model.num_scene_queries = n; });
      break;
    case Suite::Navigation:
      add("off", [](Variant& x) { x.model.use_navigation = false; });
      add("on", [](Variant&) {});
      break;
    case Suite::Commands:
      add("base", [](Variant&) {});
      break;
  }
  return v;
}

std::string cache_key(const Variant& v, std::uint64_t seed, std::int64_t steps, std::size_t n_train) {
  nlohmann::json train = v.train;
  train["seed"] = seed;
  return nlohmann::json{{"model", v.model}, {"train", train}, {"steps", steps}, {"n_train", n_train}}.dump();
}

void train_jobs(std::vector<Job>& jobs, const std::vector<Variant>& variants, const AblationSetup& s) {
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> failed(jobs.size());
  auto worker = [&] {
    for (std::size_t i; (i = next++) < jobs.size();) {
      Job& job = jobs[i];
      if (job.params) continue;
      try {
        const Variant& v = variants[job.variant];
        train::TrainConfig tc = v.train;
        tc.seed = job.seed;
        train::Trainer trainer(v.model, tc, model::init_params(v.model, job.seed), s.train_set);
        const auto result = trainer.run(s.steps);
        job.halted = result.halted;
        job.final_loss = result.log.empty() ? 0.0 : result.log.back().total;
        job.params = std::make_shared<const model::ParamStore>(trainer.params().clone());
      } catch (...) {
        failed[i] = std::current_exception();
      }
    }
  };
  const int threads = std::max(1, std::min<int>(s.threads, static_cast<int>(jobs.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (const auto& e : failed) {
    if (e) std::rethrow_exception(e);
  }
}

// Horizon values then their mean, per series.
void append_cells(std::vector<std::vector<double>>& cols, std::size_t& at, const Series& s, bool avg) {
  const auto& v = avg ? s.avg : s.max;
  for (double x : v) cols[at++].push_back(x);
  cols[at++].push_back(ProtocolReport::mean(v));
}

std::string stat_text(const Stat& s) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(3);
  os << s.mean << "±" << s.stddev;
  return os.str();
}

}  // namespace

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"components", "query_count", "navigation", "commands"};
  return names;
}

const char* suite_name(Suite s) {
  switch (s) {
    case Suite::Components: return "components";
    case Suite::QueryCount: return "query_count";
    case Suite::Navigation: return "navigation";
    case Suite::Commands: return "commands";
  }
  return "?";
}

std::optional<Suite> parse_suite(const std::string& name) {
  std::string n = name;
  for (char& c : n) c = c == '-' ? '_' : c;
  for (Suite s : {Suite::Components, Suite::QueryCount, Suite::Navigation, Suite::Commands}) {
    if (n == suite_name(s)) return s;
  }
  return std::nullopt;
}

std::shared_ptr<const model::ParamStore> TrainCache::find(const std::string& key) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : it->second;
}

void TrainCache::put(const std::string& key, std::shared_ptr<const model::ParamStore> params) {
  entries_[key] = std::move(params);
}

AblationReport run_ablation(Suite suite, const AblationSetup& s, TrainCache* cache) {
  if (s.seeds.empty()) throw ConfigError("ablation: no seeds");
  if (s.train_set.empty() || s.test_set.empty()) throw ConfigError("ablation: empty train or test set");
  if (s.steps < 1) throw ConfigError("ablation: steps must be >= 1");
  s.eval.validate();

  const auto variants = variants_for(suite, s);
  std::vector<Job> jobs;
  for (std::size_t v = 0; v < variants.size(); ++v) {
    for (std::uint64_t seed : s.seeds) {
      Job job{v, seed, cache_key(variants[v], seed, s.steps, s.train_set.size()), nullptr, 0, false};
      if (cache) job.params = cache->find(job.key);
      jobs.push_back(std::move(job));
    }
  }
  if (s.progress) {
    std::size_t todo = 0;
    for (const auto& j : jobs) todo += !j.params;
    s.progress(std::string(suite_name(suite)) + ": training " + std::to_string(todo) + " models (" +
               std::to_string(jobs.size() - todo) + " cached)");
  }
  train_jobs(jobs, variants, s);
  if (cache) {
    for (const auto& j : jobs) cache->put(j.key, j.params);
  }

  // Rows are (variant, command override); only the commands suite has more
  // than one override.
  std::vector<std::pair<std::string, CommandOverride>> overrides{{"", s.eval.command}};
  if (suite == Suite::Commands) {
    overrides = {{"Original", CommandOverride::Original}, {"Go Straight", CommandOverride::Straight},
                 {"Turn Left", CommandOverride::Left},    {"Turn Right", CommandOverride::Right},
                 {"Random", CommandOverride::Random}};
  }

  AblationReport report;
  report.suite = suite;
  Table& t = report.table;
  for (double h : s.eval.horizons_s) {
    std::ostringstream os;
    os << h << "s";
    t.horizon_labels.push_back(os.str());
  }
  switch (suite) {
    case Suite::Components: t.label_header = "Modules"; break;
    case Suite::QueryCount: t.label_header = "Number"; break;
    case Suite::Navigation: t.label_header = "Navigation"; break;
    case Suite::Commands: t.label_header = "Command"; break;
  }
  t.groups = suite == Suite::Navigation
                 ? std::vector<std::string>{"L2-GS (m)", "L2-LR (m)", "CR-GS (%)", "CR-LR (%)"}
                 : std::vector<std::string>{"L2 (m)", "CR (%)"};
  const char* protocol = s.use_avg_protocol ? "AVG" : "MAX";
  t.title = std::string(suite_name(suite)) + " (" + protocol + " protocol, " + std::to_string(s.seeds.size()) +
            " seeds, mean±std)";

  const std::size_t width = t.groups.size() * (t.horizon_labels.size() + 1);
  for (std::size_t v = 0; v < variants.size(); ++v) {
    for (const auto& [override_label, override] : overrides) {
      const std::string label = suite == Suite::Commands ? override_label : variants[v].label;
      std::vector<std::vector<double>> cols(width);
      for (const Job& job : jobs) {
        if (job.variant != v) continue;
        EvalConfig ec = s.eval;
        ec.command = override;
        ec.threads = std::max(1, s.threads);
        const auto evals = evaluate_samples(*job.params, variants[v].model, s.test_set, s.grid, ec);
        AblationRun run{label, job.seed, summarize(evals, ec, s.step_dt), std::nullopt, std::nullopt,
                        job.final_loss, job.halted};
        std::size_t at = 0;
        if (suite == Suite::Navigation) {
          auto straight = [](const SampleEval& e) { return e.label_command == NavigationCommand::GoStraight; };
          auto turning = [](const SampleEval& e) { return e.label_command != NavigationCommand::GoStraight; };
          run.straight = summarize(evals, ec, s.step_dt, straight);
          run.turning = summarize(evals, ec, s.step_dt, turning);
          append_cells(cols, at, run.straight->l2, s.use_avg_protocol);
          append_cells(cols, at, run.turning->l2, s.use_avg_protocol);
          append_cells(cols, at, run.straight->cr, s.use_avg_protocol);
          append_cells(cols, at, run.turning->cr, s.use_avg_protocol);
        } else {
          append_cells(cols, at, run.report.l2, s.use_avg_protocol);
          append_cells(cols, at, run.report.cr, s.use_avg_protocol);
        }
        report.runs.push_back(std::move(run));
      }
      Table::Row row{label, {}};
      for (const auto& c : cols) row.cells.push_back(Stat::of(c));
      t.rows.push_back(std::move(row));
    }
  }

  if (suite == Suite::Components) {
    // Avg. column of the CR group.
    const std::size_t cr_avg = width - 1;
    const Stat with = t.rows[2].cells[cr_avg], without = t.rows[1].cells[cr_avg];
    report.notes.push_back("directional check (reported, not gated): STL + FFP mean CR " + stat_text(with) +
                           (with.mean <= without.mean ? " <= " : " > ") + "STL-only mean CR " + stat_text(without) +
                           (with.mean <= without.mean ? ": trend holds" : ": trend does not hold"));
  }
  for (const auto& run : report.runs) {
    if (run.halted) report.notes.push_back("row '" + run.row + "' seed " + std::to_string(run.seed) + " halted on a non-finite loss");
  }
  return report;
}

std::string AblationReport::text() const {
  std::string out = format_table(table);
  for (const auto& n : notes) out += n + "\n";
  return out;
}

std::vector<nlohmann::json> AblationReport::records() const {
  std::vector<nlohmann::json> out;
  for (const auto& r : runs) {
    nlohmann::json j{{"suite", suite_name(suite)}, {"kind", "run"},  {"row", r.row},
                     {"seed", r.seed},             {"report", r.report}, {"final_loss", r.final_loss},
                     {"halted", r.halted}};
    if (r.straight) j["report_gs"] = *r.straight;
    if (r.turning) j["report_lr"] = *r.turning;
    out.push_back(std::move(j));
  }
  const std::size_t per = table.horizon_labels.size() + 1;
  for (const auto& row : table.rows) {
    nlohmann::json cells = nlohmann::json::array();
    for (std::size_t c = 0; c < row.cells.size(); ++c) {
      const std::size_t h = c % per;
      cells.push_back({{"group", table.groups[c / per]},
                       {"horizon", h < table.horizon_labels.size() ? table.horizon_labels[h] : "Avg."},
                       {"mean", row.cells[c].mean},
                       {"std", row.cells[c].stddev},
                       {"n", row.cells[c].n}});
    }
    out.push_back({{"suite", suite_name(suite)}, {"kind", "row"}, {"row", row.label}, {"cells", cells}});
  }
  return out;
}

}  // namespace ssr::eval
