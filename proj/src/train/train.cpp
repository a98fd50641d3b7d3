#include "ssr/train/train.hpp"

#include "ssr/errors.hpp"
#include "ssr/numerics/archive.hpp"
#include "ssr/numerics/ops.hpp"
#include "ssr/numerics/tape.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace ssr::train {
namespace {

constexpr const char* kCheckpointFormat = "ssr-checkpoint";
constexpr const char* kCheckpointVersion = "1";

std::string step_dir_name(std::int64_t step) {
  std::ostringstream os;
  os << "step-" << std::setw(8) << std::setfill('0') << step;
  return os.str();
}

const std::string& meta(const TensorArchive& archive, const std::string& key, const std::filesystem::path& dir) {
  const auto it = archive.meta.find(key);
  if (it == archive.meta.end()) throw FormatError(dir.string() + ": checkpoint meta '" + key + "' missing");
  return it->second;
}

template <typename T>
T parse_number(const std::string& text, const std::string& key) {
  std::istringstream is(text);
  T v{};
  is >> v;
  if (!is || !is.eof()) throw FormatError("checkpoint meta '" + key + "' = '" + text + "' is not a number");
  return v;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw ConfigError("train config: learning_rate must be > 0");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1)) throw ConfigError("train config: adam_beta1 must be in [0, 1)");
  if (!(adam_beta2 >= 0 && adam_beta2 < 1)) throw ConfigError("train config: adam_beta2 must be in [0, 1)");
  if (!(adam_eps > 0)) throw ConfigError("train config: adam_eps must be > 0");
  if (weight_decay < 0) throw ConfigError("train config: weight_decay must be >= 0");
  if (epochs < 1) throw ConfigError("train config: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
  if (grad_clip_norm < 0) throw ConfigError("train config: grad_clip_norm must be >= 0");
  if (loss_weight_imi < 0 || loss_weight_bev < 0) throw ConfigError("train config: loss weights must be >= 0");
  if (checkpoint_every < 0) throw ConfigError("train config: checkpoint_every must be >= 0");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"learning_rate", c.learning_rate},   {"weight_decay", c.weight_decay},
                     {"adam_beta1", c.adam_beta1},         {"adam_beta2", c.adam_beta2},
                     {"adam_eps", c.adam_eps},             {"epochs", c.epochs},
                     {"batch_size", c.batch_size},         {"grad_clip_norm", c.grad_clip_norm},
                     {"seed", c.seed},                     {"loss_weight_imi", c.loss_weight_imi},
                     {"loss_weight_bev", c.loss_weight_bev}, {"checkpoint_every", c.checkpoint_every}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  auto opt = [&j](const char* key, auto& value) {
    if (j.contains(key)) j.at(key).get_to(value);
  };
  opt("learning_rate", c.learning_rate);
  opt("weight_decay", c.weight_decay);
  opt("adam_beta1", c.adam_beta1);
  opt("adam_beta2", c.adam_beta2);
  opt("adam_eps", c.adam_eps);
  opt("epochs", c.epochs);
  opt("batch_size", c.batch_size);
  opt("grad_clip_norm", c.grad_clip_norm);
  opt("seed", c.seed);
  opt("loss_weight_imi", c.loss_weight_imi);
  opt("loss_weight_bev", c.loss_weight_bev);
  opt("checkpoint_every", c.checkpoint_every);
}

void to_json(nlohmann::json& j, const StepRecord& r) {
  j = nlohmann::json{{"step", r.step},           {"epoch", r.epoch},        {"l_imi", r.imitation},
                     {"l_bev", r.bev},           {"l_total", r.total},      {"grad_norm", r.grad_norm},
                     {"wall_time", r.wall_seconds}};
}

double grad_norm(const ParamStore& params) {
  double sq = 0;
  for (const auto& e : params.entries()) {
    if (e.tensor.has_grad()) sq += e.tensor.grad().squaredNorm();
  }
  return std::sqrt(sq);
}

double clip_grad_norm(const ParamStore& params, double max_norm) {
  const double norm = grad_norm(params);
  if (norm > max_norm && norm > 0) {
    const double factor = max_norm / norm;
    for (const auto& e : params.entries()) {
      if (e.tensor.has_grad()) detail::grad_buffer(*e.tensor.storage()) *= factor;
    }
  }
  return norm;
}

void adamw_step(const ParamStore& params, TrainState& state, const TrainConfig& cfg) {
  const auto entries = params.entries();
  for (const auto& e : entries) {
    if (e.tensor.has_grad() && !e.tensor.grad().allFinite()) {
      throw NumericalError("non-finite gradient in parameter '" + e.name + "' at step " + std::to_string(state.step));
    }
  }
  if (state.m.empty()) {
    for (const auto& e : entries) {
      state.m.push_back(Vector::Zero(e.tensor.size()));
      state.v.push_back(Vector::Zero(e.tensor.size()));
    }
  }
  if (state.m.size() != entries.size() || state.v.size() != entries.size()) {
    throw ContractError("optimizer state holds " + std::to_string(state.m.size()) + " moments for " +
                        std::to_string(entries.size()) + " parameters");
  }

  const double t = static_cast<double>(state.step + 1);
  const double c1 = 1.0 - std::pow(cfg.adam_beta1, t);
  const double c2 = 1.0 - std::pow(cfg.adam_beta2, t);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Tensor p = entries[i].tensor;
    const Vector g = p.grad();
    Vector& m = state.m[i];
    Vector& v = state.v[i];
    if (m.size() != g.size() || v.size() != g.size()) {
      throw ContractError("optimizer moments of '" + entries[i].name + "' do not match the parameter");
    }
    Vector& value = p.mutable_value();
    value *= 1.0 - cfg.learning_rate * cfg.weight_decay;
    m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * g;
    v = cfg.adam_beta2 * v + (1.0 - cfg.adam_beta2) * g.cwiseAbs2();
    value.array() -= cfg.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.adam_eps);
  }
  ++state.step;
}

Trainer::Trainer(ModelConfig model, TrainConfig cfg, ParamStore params, std::span<const SceneSample> data)
    : model_(std::move(model)), cfg_(cfg), params_(std::move(params)), data_(data) {
  model_.validate();
  cfg_.validate();
  if (data_.empty()) throw ConfigError("training set is empty");
  for (const auto& e : params_.entries()) {
    state_.m.push_back(Vector::Zero(e.tensor.size()));
    state_.v.push_back(Vector::Zero(e.tensor.size()));
  }
  state_.epoch_rng = Rng(mix_seed(cfg_.seed, 0x5a1e)).state();
  start_epoch();
}

void Trainer::start_epoch() {
  Rng rng;
  rng.set_state(state_.epoch_rng);
  order_.resize(data_.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng.below(i)]);
  next_epoch_rng_ = rng.state();
}

std::int64_t Trainer::steps_per_epoch() const {
  const auto n = static_cast<std::int64_t>(data_.size());
  return (n + cfg_.batch_size - 1) / cfg_.batch_size;
}

StepRecord Trainer::step() {
  const auto start = std::chrono::steady_clock::now();
  const std::size_t begin = static_cast<std::size_t>(state_.batch_in_epoch) * static_cast<std::size_t>(cfg_.batch_size);
  const std::size_t end = std::min(order_.size(), begin + static_cast<std::size_t>(cfg_.batch_size));
  const double inv = 1.0 / static_cast<double>(end - begin);

  model::ForwardOptions options;
  options.train_mode = true;
  options.weights = {cfg_.loss_weight_imi, cfg_.loss_weight_bev};

  params_.zero_grad();
  params_.set_requires_grad(true);
  StepRecord rec;
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor total;
    for (std::size_t i = begin; i < end; ++i) {
      const model::ForwardResult r = model::forward(data_[order_[i]], params_, model_, options);
      total = i == begin ? r.losses.total : add(total, r.losses.total);
      rec.imitation += r.losses.imitation.item() * inv;
      if (r.losses.has_bev) rec.bev += r.losses.bev.item() * inv;
    }
    const Tensor loss = scale(total, inv);
    rec.total = loss.item();
    if (!std::isfinite(rec.total)) {
      throw NumericalError("non-finite loss " + std::to_string(rec.total) + " at step " + std::to_string(state_.step));
    }
    tape.backward(loss);
  }
  rec.grad_norm = cfg_.grad_clip_norm > 0 ? clip_grad_norm(params_, cfg_.grad_clip_norm) : grad_norm(params_);
  adamw_step(params_, state_, cfg_);

  rec.epoch = state_.epoch;
  if (++state_.batch_in_epoch == steps_per_epoch()) {
    state_.epoch_rng = next_epoch_rng_;
    ++state_.epoch;
    state_.batch_in_epoch = 0;
    start_epoch();
  }
  rec.step = state_.step;
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

TrainResult Trainer::run(std::int64_t total_steps, const TrainOptions& options) {
  TrainResult result;
  std::ofstream metrics;
  if (!options.run_dir.empty()) {
    std::filesystem::create_directories(options.run_dir / "checkpoints");
    metrics.open(options.run_dir / "metrics.jsonl", std::ios::app);
    if (!metrics) throw FormatError("cannot write " + (options.run_dir / "metrics.jsonl").string());
  }
  auto checkpoint = [&] {
    if (options.run_dir.empty()) return;
    result.last_checkpoint = options.run_dir / "checkpoints" / step_dir_name(state_.step);
    save(result.last_checkpoint);
  };

  while (state_.step < total_steps) {
    StepRecord rec;
    try {
      rec = step();
    } catch (const NumericalError& e) {
      result.halted = true;
      result.halt_reason = e.what();
      // Parameters are untouched by the failed step, so they are the last good ones.
      checkpoint();
      break;
    }
    result.log.push_back(rec);
    if (metrics.is_open()) metrics << nlohmann::json(rec).dump() << '\n' << std::flush;
    if (options.on_step) options.on_step(rec);
    if (cfg_.checkpoint_every > 0 && state_.step % cfg_.checkpoint_every == 0) checkpoint();
  }
  if (!result.halted && (result.last_checkpoint.empty() ||
                         result.last_checkpoint.filename() != step_dir_name(state_.step))) {
    checkpoint();
  }
  return result;
}

void Trainer::save(const std::filesystem::path& dir) const { save_checkpoint(dir, model_, cfg_, params_, state_); }

Trainer Trainer::load(const std::filesystem::path& dir, std::span<const SceneSample> data) {
  Checkpoint cp = load_checkpoint(dir);
  Trainer t(cp.model, cp.train, std::move(cp.params), data);
  t.state_ = std::move(cp.state);
  t.start_epoch();
  return t;
}

void save_checkpoint(const std::filesystem::path& dir, const ModelConfig& model, const TrainConfig& train,
                     const ParamStore& params, const TrainState& state) {
  TensorArchive archive;
  const auto entries = params.entries();
  for (const auto& e : entries) archive.tensors.emplace_back("param/" + e.name, e.tensor.detach());
  if (state.m.size() == entries.size()) {
    for (std::size_t i = 0; i < entries.size(); ++i) {
      archive.tensors.emplace_back("adam.m/" + entries[i].name, Tensor(entries[i].tensor.shape(), state.m[i]));
      archive.tensors.emplace_back("adam.v/" + entries[i].name, Tensor(entries[i].tensor.shape(), state.v[i]));
    }
  }
  archive.meta["format"] = kCheckpointFormat;
  archive.meta["version"] = kCheckpointVersion;
  archive.meta["step"] = std::to_string(state.step);
  archive.meta["epoch"] = std::to_string(state.epoch);
  archive.meta["batch_in_epoch"] = std::to_string(state.batch_in_epoch);
  archive.meta["rng"] = state.epoch_rng;
  archive.meta["model_config"] = nlohmann::json(model).dump();
  archive.meta["train_config"] = nlohmann::json(train).dump();
  write_archive(dir, archive);
}

Checkpoint load_checkpoint(const std::filesystem::path& dir, const ModelConfig* expected) {
  if (!std::filesystem::exists(dir / "manifest.txt")) throw FormatError("no checkpoint at " + dir.string());
  const TensorArchive archive = read_archive(dir);
  if (meta(archive, "format", dir) != kCheckpointFormat || meta(archive, "version", dir) != kCheckpointVersion) {
    throw FormatError(dir.string() + ": not an " + kCheckpointFormat + " " + kCheckpointVersion + " archive");
  }
  Checkpoint cp;
  try {
    cp.model = nlohmann::json::parse(meta(archive, "model_config", dir)).get<ModelConfig>();
    cp.train = nlohmann::json::parse(meta(archive, "train_config", dir)).get<TrainConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(dir.string() + ": checkpoint config: " + e.what());
  }
  cp.state.step = parse_number<std::int64_t>(meta(archive, "step", dir), "step");
  cp.state.epoch = parse_number<int>(meta(archive, "epoch", dir), "epoch");
  cp.state.batch_in_epoch = parse_number<int>(meta(archive, "batch_in_epoch", dir), "batch_in_epoch");
  cp.state.epoch_rng = meta(archive, "rng", dir);

  // Reference layout: names, order and shapes of the expected model.
  const ParamStore reference = model::init_params(expected ? *expected : cp.model, 0);
  bool have_moments = true;
  for (const auto& e : reference.entries()) {
    const Tensor* stored = archive.find("param/" + e.name);
    if (!stored) throw DimensionError("parameter '" + e.name + "' missing from checkpoint " + dir.string());
    if (stored->shape() != e.tensor.shape()) {
      throw DimensionError("parameter '" + e.name + "': checkpoint shape " + shape_string(stored->shape()) +
                           " but model expects " + shape_string(e.tensor.shape()));
    }
    cp.params.add(e.name, stored->detach());
    const Tensor* m = archive.find("adam.m/" + e.name);
    const Tensor* v = archive.find("adam.v/" + e.name);
    if (m && v && m->shape() == e.tensor.shape() && v->shape() == e.tensor.shape()) {
      cp.state.m.push_back(m->value());
      cp.state.v.push_back(v->value());
    } else {
      have_moments = false;
    }
  }
  const auto stored_params = std::count_if(archive.tensors.begin(), archive.tensors.end(),
                                           [](const auto& t) { return t.first.rfind("param/", 0) == 0; });
  if (static_cast<std::size_t>(stored_params) != reference.size()) {
    throw DimensionError("checkpoint " + dir.string() + " stores " + std::to_string(stored_params) +
                         " parameters, model expects " + std::to_string(reference.size()));
  }
  if (!have_moments) {
    cp.state.m.clear();
    cp.state.v.clear();
  }
  return cp;
}

std::filesystem::path latest_checkpoint(const std::filesystem::path& run_dir) {
  const auto root = run_dir / "checkpoints";
  std::filesystem::path best;
  if (!std::filesystem::is_directory(root)) return best;
  for (const auto& entry : std::filesystem::directory_iterator(root)) {
    const std::string name = entry.path().filename().string();
    if (entry.is_directory() && name.rfind("step-", 0) == 0 && (best.empty() || name > best.filename().string())) {
      best = entry.path();
    }
  }
  return best;
}

}  // namespace ssr::train
