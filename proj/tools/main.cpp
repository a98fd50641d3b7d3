// ssr: data generation, training, evaluation, ablations and attention export.
#include "ssr/errors.hpp"
#include "ssr/eval/ablation.hpp"
#include "ssr/eval/attention_export.hpp"
#include "ssr/eval/eval.hpp"
#include "ssr/numerics/rng.hpp"
#include "ssr/run/config.hpp"
#include "ssr/train/train.hpp"
#include "ssr/world/dataset.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace ssr;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Options shared by every subcommand that builds a RunConfig.
struct Common {
  std::optional<std::string> preset;
  std::optional<std::string> config_file;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  bool force = false;
  int threads = 1;
};

// World / model / train overrides; unset optionals leave the config alone.
struct Overrides {
  std::optional<int> episodes, grid, channels, horizon, min_obstacles, max_obstacles;
  std::optional<double> dt, noise, extent;
  std::optional<int> scene_queries, heads, self_layers, ffp_layers;
  bool no_stl = false, no_navigation = false;
  std::optional<std::int64_t> steps;
  std::optional<int> epochs, batch_size, checkpoint_every;
  std::optional<double> lr, weight_decay, clip, loss_weight_imi, loss_weight_bev;
};

void add_common(CLI::App* app, Common& c, bool with_preset = true) {
  if (with_preset) {
    app->add_option("--preset", c.preset, "Configuration preset: tiny, desk (default) or paper-scale");
    app->add_option("--config", c.config_file, "JSON file merged over the preset (flags still win)")
        ->check(CLI::ExistingFile);
  }
  app->add_option("--seed", c.seed, "Random seed");
  app->add_option("--out", c.out, "Output directory (default: $SSR_OUTPUT_ROOT or ./runs, then a derived name)");
  app->add_flag("--force", c.force, "Allow writing into an existing non-empty output directory");
  app->add_option("--threads", c.threads, "Upper bound on worker threads")->check(CLI::PositiveNumber);
}

void add_world(CLI::App* app, Overrides& o) {
  app->add_option("--grid", o.grid, "BEV grid side (H = W)");
  app->add_option("--channels", o.channels, "BEV feature channels C (>= 10)");
  app->add_option("--horizon", o.horizon, "Future waypoints N_t");
  app->add_option("--dt", o.dt, "Seconds between waypoints");
  app->add_option("--noise", o.noise, "Feature / curvature noise std");
  app->add_option("--extent", o.extent, "Half-width of the BEV square in meters");
  app->add_option("--min-obstacles", o.min_obstacles, "Fewest obstacles per episode");
  app->add_option("--max-obstacles", o.max_obstacles, "Most obstacles per episode");
}

void add_model_train(CLI::App* app, Overrides& o) {
  app->add_option("--scene-queries", o.scene_queries, "Number of scene tokens N_s");
  app->add_option("--heads", o.heads, "Attention heads");
  app->add_option("--self-attn-layers", o.self_layers, "Scene self-attention layers");
  app->add_option("--ffp-attn-layers", o.ffp_layers, "Future predictor self-attention layers");
  app->add_flag("--no-stl", o.no_stl, "Waypoint queries attend the flattened BEV directly (no tokens, no FFP)");
  app->add_flag("--no-navigation", o.no_navigation, "Drop the command from the channel gate");
  app->add_option("--steps", o.steps, "Optimizer steps (0 = --epochs full epochs)");
  app->add_option("--epochs", o.epochs, "Epochs when --steps is 0");
  app->add_option("--batch-size", o.batch_size, "Samples per optimizer step");
  app->add_option("--lr", o.lr, "Learning rate");
  app->add_option("--weight-decay", o.weight_decay, "AdamW decoupled weight decay");
  app->add_option("--grad-clip", o.clip, "Global gradient norm cap (0 = off)");
  app->add_option("--loss-weight-imi", o.loss_weight_imi, "Weight of the imitation loss");
  app->add_option("--loss-weight-bev", o.loss_weight_bev, "Weight of the future BEV loss (0 = no FFP)");
  app->add_option("--checkpoint-every", o.checkpoint_every, "Checkpoint interval in steps (0 = end only)");
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw FormatError("cannot read " + p.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(p.string() + ": " + e.what());
  }
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
  if (!out) throw FormatError("cannot write " + p.string());
}

// defaults < preset < config file < flags
run::RunConfig build_config(const Common& c, const Overrides& o) {
  nlohmann::json file;
  if (c.config_file) file = read_json(*c.config_file);
  std::string name = "desk";
  if (file.contains("preset")) name = file.at("preset").get<std::string>();
  if (c.preset) name = *c.preset;
  run::RunConfig cfg = run::preset(name);
  if (!file.is_null()) {
    file.erase("preset");
    cfg = run::merge(cfg, file);
  }
  cfg.preset = name;
  if (c.seed) {
    cfg.seed = *c.seed;
    cfg.train.seed = *c.seed;
  }
  auto& w = cfg.world;
  if (o.episodes) cfg.episodes = *o.episodes;
  if (o.grid) w.grid_h = w.grid_w = *o.grid;
  if (o.channels) w.channels = *o.channels;
  if (o.horizon) w.horizon_steps = *o.horizon;
  if (o.dt) w.step_dt = *o.dt;
  if (o.noise) w.noise_std = *o.noise;
  if (o.extent) w.bev_extent_m = *o.extent;
  if (o.min_obstacles) w.min_obstacles = *o.min_obstacles;
  if (o.max_obstacles) w.max_obstacles = *o.max_obstacles;
  auto& m = cfg.model;
  if (o.scene_queries) m.num_scene_queries = *o.scene_queries;
  if (o.heads) m.attn_heads = *o.heads;
  if (o.self_layers) m.self_attn_layers = *o.self_layers;
  if (o.ffp_layers) m.ffp_attn_layers = *o.ffp_layers;
  if (o.no_stl) m.use_stl = false;
  if (o.no_navigation) m.use_navigation = false;
  auto& t = cfg.train;
  if (o.steps) cfg.steps = *o.steps;
  if (o.epochs) t.epochs = *o.epochs;
  if (o.batch_size) t.batch_size = *o.batch_size;
  if (o.lr) t.learning_rate = *o.lr;
  if (o.weight_decay) t.weight_decay = *o.weight_decay;
  if (o.clip) t.grad_clip_norm = *o.clip;
  if (o.loss_weight_imi) t.loss_weight_imi = *o.loss_weight_imi;
  if (o.loss_weight_bev) t.loss_weight_bev = *o.loss_weight_bev;
  if (o.checkpoint_every) t.checkpoint_every = *o.checkpoint_every;
  cfg.eval.threads = c.threads;
  return cfg;
}

fs::path output_root() {
  const char* env = std::getenv("SSR_OUTPUT_ROOT");
  return env && *env ? fs::path(env) : fs::path("runs");
}

fs::path prepare_out(const Common& c, const std::string& fallback) {
  const fs::path dir = c.out ? fs::path(*c.out) : output_root() / fallback;
  if (fs::exists(dir) && !fs::is_directory(dir)) throw UsageError(dir.string() + " exists and is not a directory");
  if (fs::is_directory(dir) && !fs::is_empty(dir) && !c.force) {
    throw UsageError("refusing to write into non-empty " + dir.string() + " (use --force)");
  }
  fs::create_directories(dir);
  return dir;
}

// The output directory is recorded as "." (the directory holding the file),
// so identical runs into different places stay byte-identical.
void save_config(const fs::path& dir, run::RunConfig cfg) {
  cfg.output_dir = ".";
  write_text(dir / "config.json", nlohmann::json(cfg).dump(2) + "\n");
}

// A checkpoint directory, or a run directory whose newest checkpoint is used.
fs::path resolve_checkpoint(const fs::path& p) {
  if (fs::exists(p / "manifest.txt")) return p;
  const auto latest = train::latest_checkpoint(p);
  if (latest.empty()) throw FormatError("no checkpoint at " + p.string());
  return latest;
}

world::Dataset load_data(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw FormatError("dataset directory " + dir.string() + " does not exist");
  return world::read_dataset(dir);
}

// ---- gen-data

int gen_data(const Common& c, const Overrides& o) {
  run::RunConfig cfg = build_config(c, o);
  if (o.episodes && *o.episodes < 1) throw UsageError("--episodes must be >= 1");
  cfg.finalize();
  const fs::path dir = prepare_out(c, "data-" + cfg.preset + "-s" + std::to_string(cfg.seed));
  save_config(dir, cfg);
  world::Dataset ds;
  ds.config = cfg.world;
  ds.samples = world::generate_samples(cfg.world, cfg.episodes, cfg.seed, &ds.seeds);
  world::write_dataset(ds, dir);
  int collisions = 0, clipped = 0;
  for (const auto& s : ds.samples) {
    collisions += s.gt_collision;
    clipped += s.clipped;
  }
  std::cout << "wrote " << dir.string() << ": " << ds.samples.size() << " samples from " << cfg.episodes
            << " episodes, gt_collision " << collisions << ", clipped " << clipped << ", N_t "
            << cfg.world.horizon_steps << " x " << cfg.world.step_dt << " s\n";
  return kOk;
}

// ---- train

struct TrainArgs {
  std::string data;
  std::optional<std::string> resume;
};

int train_cmd(const Common& c, const Overrides& o, const TrainArgs& a) {
  const world::Dataset ds = load_data(a.data);
  if (a.resume) {
    const fs::path ckpt = resolve_checkpoint(*a.resume);
    train::Trainer trainer = train::Trainer::load(ckpt, ds.samples);
    model::check_compatible(trainer.model_config(), ds.config);
    const fs::path dir = c.out ? fs::path(*c.out) : fs::path(*a.resume);
    fs::create_directories(dir);
    const std::int64_t total = o.steps ? *o.steps : trainer.state().step + trainer.steps_per_epoch();
    std::cout << "resuming " << ckpt.string() << " at step " << trainer.state().step << "\n";
    const auto r = trainer.run(total, {.run_dir = dir, .on_step = {}});
    if (r.halted) {
      std::cerr << "halted: " << r.halt_reason << "\n";
      return kNumerical;
    }
    std::cout << "checkpoint " << r.last_checkpoint.string() << "\n";
    return kOk;
  }

  run::RunConfig cfg = build_config(c, o);
  cfg.finalize();
  // The dataset fixes the feature dimensions; a disagreeing preset or flag is
  // an error rather than a silent override.
  model::check_compatible(cfg.model, ds.config);
  cfg.world = ds.config;
  const fs::path dir = prepare_out(c, "train-" + cfg.preset + "-s" + std::to_string(cfg.seed));
  save_config(dir, cfg);

  train::Trainer trainer(cfg.model, cfg.train, model::init_params(cfg.model, cfg.seed), ds.samples);
  const std::int64_t total = cfg.steps > 0 ? cfg.steps : std::int64_t{cfg.train.epochs} * trainer.steps_per_epoch();
  const std::int64_t every = std::max<std::int64_t>(1, total / 20);
  train::TrainOptions opt;
  opt.run_dir = dir;
  opt.on_step = [&](const train::StepRecord& r) {
    if (r.step % every == 0 || r.step == total) {
      std::printf("step %6lld  epoch %3d  L_imi %.5f  L_bev %.6f  L_total %.5f\n", static_cast<long long>(r.step),
                  r.epoch, r.imitation, r.bev, r.total);
      std::fflush(stdout);
    }
  };
  const auto r = trainer.run(total, opt);
  if (r.halted) {
    std::cerr << "halted: " << r.halt_reason << "; last good parameters in " << r.last_checkpoint.string() << "\n";
    return kNumerical;
  }
  std::cout << "checkpoint " << r.last_checkpoint.string() << "\n";
  return kOk;
}

// ---- eval

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::optional<std::string> command_override;
  bool non_cumulative = false;
  std::optional<std::vector<double>> horizons;
  std::optional<double> ego_length, ego_width;
};

eval::CommandOverride parse_override_flag(const std::optional<std::string>& name) {
  if (!name) return eval::CommandOverride::Original;
  const auto o = eval::parse_override(*name);
  if (!o) throw UsageError("unknown --command-override '" + *name + "' (original, straight, left, right, random)");
  return *o;
}

int eval_cmd(const Common& c, const EvalArgs& a) {
  const fs::path ckpt = resolve_checkpoint(a.checkpoint);
  const train::Checkpoint cp = train::load_checkpoint(ckpt);
  const world::Dataset ds = load_data(a.data);
  model::check_compatible(cp.model, ds.config);

  run::RunConfig cfg;
  cfg.preset = "checkpoint";
  cfg.world = ds.config;
  cfg.model = cp.model;
  cfg.train = cp.train;
  cfg.eval.command = parse_override_flag(a.command_override);
  cfg.eval.cumulative_collisions = !a.non_cumulative;
  if (a.horizons) cfg.eval.horizons_s = *a.horizons;
  if (a.ego_length) cfg.eval.ego_length = *a.ego_length;
  if (a.ego_width) cfg.eval.ego_width = *a.ego_width;
  if (c.seed) cfg.eval.random_command_seed = *c.seed;
  cfg.eval.threads = c.threads;
  cfg.validate();
  // Fail on bad horizons before any output exists.
  eval::horizon_steps(cfg.eval.horizons_s, ds.config.step_dt, ds.config.horizon_steps);

  const fs::path dir = prepare_out(c, "eval-" + ckpt.filename().string());
  save_config(dir, cfg);
  const auto evals = eval::evaluate_samples(cp.params, cp.model, ds.samples, ds.config.grid(), cfg.eval);
  const auto report = eval::summarize(evals, cfg.eval, ds.config.step_dt);
  const std::string text = std::string("checkpoint ") + ckpt.string() + ", command override " +
                           eval::override_name(cfg.eval.command) + ", " +
                           (cfg.eval.cumulative_collisions ? "cumulative" : "per-step") + " collisions\n" +
                           eval::format_report(report);
  write_text(dir / "report.txt", text);
  write_text(dir / "report.json", nlohmann::json(report).dump(2) + "\n");
  std::ofstream per(dir / "samples.jsonl");
  for (std::size_t i = 0; i < evals.size(); ++i) {
    per << nlohmann::json{{"index", i},
                          {"l2", evals[i].errors.l2},
                          {"collision", evals[i].errors.collision},
                          {"off_route", evals[i].errors.off_route},
                          {"command", world::command_name(evals[i].used_command)},
                          {"gt_collision", evals[i].gt_collision}}
               .dump()
        << "\n";
  }
  std::cout << text;
  return kOk;
}

// ---- export-attn

struct ExportArgs {
  std::string checkpoint;
  std::string data;
  int sample = 0;
  std::optional<std::string> command_override;
};

int export_attn(const Common& c, const ExportArgs& a) {
  const fs::path ckpt = resolve_checkpoint(a.checkpoint);
  const train::Checkpoint cp = train::load_checkpoint(ckpt);
  const world::Dataset ds = load_data(a.data);
  model::check_compatible(cp.model, ds.config);
  if (a.sample < 0 || a.sample >= static_cast<int>(ds.samples.size())) {
    throw RangeError("sample index " + std::to_string(a.sample) + " out of range (dataset has " +
                     std::to_string(ds.samples.size()) + " samples)");
  }
  if (!cp.model.use_stl) throw ConfigError("checkpoint was trained without scene tokens; nothing to export");
  const auto override = parse_override_flag(a.command_override);
  if (override == eval::CommandOverride::Random) throw UsageError("export-attn takes a fixed command");

  const fs::path dir = prepare_out(c, "attn-" + ckpt.filename().string() + "-" + std::to_string(a.sample));
  const world::SceneSample& s = ds.samples[static_cast<std::size_t>(a.sample)];
  std::optional<world::NavigationCommand> command;
  switch (override) {
    case eval::CommandOverride::Original: break;
    case eval::CommandOverride::Straight: command = world::NavigationCommand::GoStraight; break;
    case eval::CommandOverride::Left: command = world::NavigationCommand::TurnLeft; break;
    case eval::CommandOverride::Right: command = world::NavigationCommand::TurnRight; break;
    case eval::CommandOverride::Random: break;
  }
  const auto exported = eval::export_attention(dir, cp.params, cp.model, s, command);
  write_text(dir / "meta.json",
             nlohmann::json{{"checkpoint", ckpt.string()},
                            {"sample", a.sample},
                            {"command", world::command_name(exported.command)},
                            {"scene_queries", cp.model.num_scene_queries},
                            {"grid", {cp.model.grid_h, cp.model.grid_w}},
                            {"orientation", "row 0 = forward edge, column 0 = left edge, ego at center"}}
                     .dump(2) +
                 "\n");
  std::cout << "wrote " << cp.model.num_scene_queries << " token maps and the sum map to " << (dir / "attention").string()
            << "\n";
  return kOk;
}

// ---- ablate

struct AblateArgs {
  std::string suite;
  int seeds = 3;
  std::optional<int> test_episodes;
  std::optional<std::string> data, test_data;
  std::string protocol = "max";
  std::optional<std::vector<int>> query_counts;
};

int ablate(const Common& c, const Overrides& o, const AblateArgs& a) {
  std::vector<eval::Suite> suites;
  if (a.suite == "all") {
    for (const auto& n : eval::suite_names()) suites.push_back(*eval::parse_suite(n));
  } else {
    const auto s = eval::parse_suite(a.suite);
    if (!s) {
      std::string list;
      for (const auto& n : eval::suite_names()) list += (list.empty() ? "" : ", ") + n;
      throw UsageError("unknown suite '" + a.suite + "' (valid: " + list + ", all)");
    }
    suites.push_back(*s);
  }
  if (a.seeds < 1) throw UsageError("--seeds must be >= 1");
  if (a.protocol != "max" && a.protocol != "avg") throw UsageError("--protocol must be max or avg");

  Common cc = c;
  if (!cc.preset && !cc.config_file) cc.preset = "tiny";
  run::RunConfig cfg = build_config(cc, o);
  cfg.finalize();

  world::Dataset train_ds, test_ds;
  if (a.data) {
    train_ds = load_data(*a.data);
  } else {
    train_ds.config = cfg.world;
    train_ds.samples = world::generate_samples(cfg.world, cfg.episodes, mix_seed(cfg.seed, 1));
  }
  if (a.test_data) {
    test_ds = load_data(*a.test_data);
  } else {
    test_ds.config = train_ds.config;
    test_ds.samples = world::generate_samples(train_ds.config, a.test_episodes.value_or(cfg.episodes),
                                              mix_seed(cfg.seed, 2));
  }
  model::check_compatible(cfg.model, train_ds.config);
  model::check_compatible(cfg.model, test_ds.config);

  const fs::path dir = prepare_out(c, "ablate-" + a.suite + "-" + cfg.preset);
  save_config(dir, cfg);

  eval::AblationSetup setup;
  setup.model = cfg.model;
  setup.train = cfg.train;
  setup.eval = cfg.eval;
  setup.grid = train_ds.config.grid();
  setup.step_dt = train_ds.config.step_dt;
  setup.train_set = train_ds.samples;
  setup.test_set = test_ds.samples;
  setup.seeds.clear();
  for (int i = 0; i < a.seeds; ++i) setup.seeds.push_back(cfg.seed + static_cast<std::uint64_t>(i));
  setup.steps = cfg.steps > 0 ? cfg.steps
                              : std::int64_t{cfg.train.epochs} *
                                    ((static_cast<std::int64_t>(train_ds.samples.size()) + cfg.train.batch_size - 1) /
                                     cfg.train.batch_size);
  if (a.query_counts) setup.query_counts = *a.query_counts;
  setup.use_avg_protocol = a.protocol == "avg";
  setup.threads = c.threads;
  setup.progress = [](const std::string& m) { std::cerr << m << "\n"; };

  eval::TrainCache cache;
  for (eval::Suite s : suites) {
    const auto report = eval::run_ablation(s, setup, &cache);
    const std::string name = eval::suite_name(s);
    write_text(dir / (name + ".txt"), report.text());
    std::ofstream jl(dir / (name + ".jsonl"));
    for (const auto& r : report.records()) jl << r.dump() << "\n";
    std::cout << report.text() << "\n";
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse scene-token planner on a synthetic BEV world"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  Common common;
  Overrides over;
  TrainArgs targs;
  EvalArgs eargs;
  ExportArgs xargs;
  AblateArgs aargs;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset directory");
  add_common(gen, common);
  gen->add_option("--episodes", over.episodes, "Number of episodes (each yields several samples)");
  add_world(gen, over);

  auto* tr = app.add_subcommand("train", "Train a model on a dataset");
  add_common(tr, common);
  tr->add_option("--data", targs.data, "Dataset directory")->required();
  tr->add_option("--resume", targs.resume, "Checkpoint or run directory to continue from");
  add_model_train(tr, over);

  auto* ev = app.add_subcommand("eval", "L2 / collision-rate report for a checkpoint");
  add_common(ev, common, false);
  ev->add_option("--checkpoint", eargs.checkpoint, "Checkpoint or run directory")->required();
  ev->add_option("--data", eargs.data, "Dataset directory")->required();
  ev->add_option("--command-override", eargs.command_override, "original, straight, left, right or random");
  ev->add_flag("--non-cumulative", eargs.non_cumulative, "Count a collision only at the step where it happens");
  ev->add_option("--horizons", eargs.horizons, "Horizons in seconds (default 1 2 3)");
  ev->add_option("--ego-length", eargs.ego_length, "Ego box length in meters");
  ev->add_option("--ego-width", eargs.ego_width, "Ego box width in meters");

  auto* ex = app.add_subcommand("export-attn", "Write the scene-token attention maps of one sample");
  add_common(ex, common, false);
  ex->add_option("--checkpoint", xargs.checkpoint, "Checkpoint or run directory")->required();
  ex->add_option("--data", xargs.data, "Dataset directory")->required();
  ex->add_option("--sample", xargs.sample, "Sample index");
  ex->add_option("--command-override", xargs.command_override, "original, straight, left or right");

  auto* ab = app.add_subcommand("ablate", "Train and evaluate an ablation suite over several seeds");
  add_common(ab, common);
  ab->add_option("suite", aargs.suite, "components, query-count, navigation, commands or all")->required();
  ab->add_option("--seeds", aargs.seeds, "Number of seeds (seed, seed+1, ...)");
  ab->add_option("--episodes", over.episodes, "Training episodes when no --data is given");
  ab->add_option("--test-episodes", aargs.test_episodes, "Held-out episodes when no --test-data is given");
  ab->add_option("--data", aargs.data, "Training dataset directory");
  ab->add_option("--test-data", aargs.test_data, "Held-out dataset directory");
  ab->add_option("--protocol", aargs.protocol, "Table protocol: max (default) or avg");
  ab->add_option("--query-counts", aargs.query_counts, "N_s values of the query-count suite");
  add_model_train(ab, over);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return gen_data(common, over);
    if (*tr) return train_cmd(common, over, targs);
    if (*ev) return eval_cmd(common, eargs);
    if (*ex) return export_attn(common, xargs);
    if (*ab) return ablate(common, over, aargs);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
