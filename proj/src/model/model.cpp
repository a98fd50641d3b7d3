#include "ssr/model/model.hpp"

#include "ssr/errors.hpp"
#include "ssr/numerics/ops.hpp"
#include "ssr/numerics/rng.hpp"

#include <cmath>

namespace ssr::model {
namespace {

void require_positive(int v, const char* name) {
  if (v < 1) throw ConfigError(std::string("model config: ") + name + " must be >= 1, got " + std::to_string(v));
}

void require_shape(const Tensor& t, const Shape& want, const char* what) {
  if (t.shape() != want) {
    throw DimensionError(std::string(what) + ": expected " + shape_string(want) + ", got " + shape_string(t.shape()));
  }
}

Index command_row(NavigationCommand cmd, const ModelConfig& cfg) {
  const int idx = world::command_index(cmd);
  if (idx < 0 || idx >= cfg.num_modes) {
    throw DomainError("navigation command index " + std::to_string(idx) + " outside [0, " +
                      std::to_string(cfg.num_modes) + ")");
  }
  return idx;
}

Tensor mlp2(const Tensor& x, const ParamStore& p, const std::string& prefix) {
  const Tensor h = relu(linear(x, p[prefix + ".w1"], p[prefix + ".b1"]));
  return linear(h, p[prefix + ".w2"], p[prefix + ".b2"]);
}

AttentionWeights attention_weights(const ParamStore& p, const std::string& prefix, int heads) {
  AttentionWeights w;
  w.wq = p[prefix + ".wq"];
  w.bq = p[prefix + ".bq"];
  w.wk = p[prefix + ".wk"];
  w.bk = p[prefix + ".bk"];
  w.wv = p[prefix + ".wv"];
  w.bv = p[prefix + ".bv"];
  w.wo = p[prefix + ".wo"];
  w.bo = p[prefix + ".bo"];
  w.heads = heads;
  return w;
}

Tensor norm(const Tensor& x, const ParamStore& p, const std::string& prefix) {
  return layer_norm(x, p[prefix + ".g"], p[prefix + ".b"], 1);
}

// Pre-norm attention block; self-attention when memory is null.
Tensor attention_block(const Tensor& x, const Tensor* memory, const ParamStore& p, const std::string& prefix,
                       int heads) {
  const Tensor q = norm(x, p, prefix + ".ln1");
  const Tensor& kv = memory ? *memory : q;
  Tensor h = add(x, multihead_attention(q, kv, kv, attention_weights(p, prefix + ".attn", heads)));
  return add(h, mlp2(norm(h, p, prefix + ".ln2"), p, prefix + ".ffn"));
}

struct Initializer {
  ParamStore& store;
  Rng rng;

  void uniform(const std::string& name, Shape shape, Index fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Vector v(shape_size(shape));
    for (Index i = 0; i < v.size(); ++i) v[i] = rng.uniform(-bound, bound);
    store.add(name, Tensor(std::move(shape), std::move(v)));
  }
  void normal(const std::string& name, Shape shape, double stddev) {
    Vector v(shape_size(shape));
    for (Index i = 0; i < v.size(); ++i) v[i] = rng.normal(0.0, stddev);
    store.add(name, Tensor(std::move(shape), std::move(v)));
  }
  void constant(const std::string& name, Shape shape, double c) { store.add(name, Tensor::constant(std::move(shape), c)); }

  void linear(const std::string& prefix, const std::string& suffix, Index in, Index out) {
    uniform(prefix + ".w" + suffix, {in, out}, in);
    uniform(prefix + ".b" + suffix, {1, out}, in);
  }
  void mlp(const std::string& prefix, Index in, Index hidden, Index out) {
    linear(prefix, "1", in, hidden);
    linear(prefix, "2", hidden, out);
  }
  void norm(const std::string& prefix, Index c) {
    constant(prefix + ".g", {c}, 1.0);
    constant(prefix + ".b", {c}, 0.0);
  }
  void block(const std::string& prefix, const ModelConfig& cfg) {
    const Index c = cfg.channels;
    norm(prefix + ".ln1", c);
    const std::string a = prefix + ".attn";
    for (const char* m : {"q", "k", "v"}) {
      uniform(a + ".w" + m, {c, c}, c);
      uniform(a + ".b" + m, {1, c}, c);
    }
    constant(a + ".wo", {c, c}, 0.0);
    constant(a + ".bo", {1, c}, 0.0);
    norm(prefix + ".ln2", c);
    linear(prefix + ".ffn", "1", c, cfg.ffn_hidden);
    constant(prefix + ".ffn.w2", {cfg.ffn_hidden, c}, 0.0);
    constant(prefix + ".ffn.b2", {1, c}, 0.0);
  }
};

}  // namespace

void ModelConfig::validate() const {
  require_positive(grid_h, "grid_h");
  require_positive(grid_w, "grid_w");
  require_positive(channels, "channels");
  require_positive(num_scene_queries, "num_scene_queries");
  require_positive(num_modes, "num_modes");
  require_positive(horizon_steps, "horizon_steps");
  require_positive(self_attn_layers, "self_attn_layers");
  require_positive(ffp_attn_layers, "ffp_attn_layers");
  require_positive(attn_heads, "attn_heads");
  require_positive(cmd_embed_dim, "cmd_embed_dim");
  require_positive(se_hidden, "se_hidden");
  require_positive(ffn_hidden, "ffn_hidden");
  require_positive(head_hidden, "head_hidden");
  require_positive(mln_hidden, "mln_hidden");
  require_positive(fuser_hidden, "fuser_hidden");
  if (channels % attn_heads != 0) {
    throw ConfigError("model config: channels " + std::to_string(channels) + " not divisible by attn_heads " +
                      std::to_string(attn_heads));
  }
  if (num_modes > world::kNumCommands) {
    throw ConfigError("model config: num_modes " + std::to_string(num_modes) + " exceeds the " +
                      std::to_string(world::kNumCommands) + " navigation commands");
  }
  if (!(waypoint_scale > 0) || !std::isfinite(waypoint_scale)) throw ConfigError("model config: waypoint_scale must be > 0");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"grid_h", c.grid_h},
                     {"grid_w", c.grid_w},
                     {"channels", c.channels},
                     {"num_scene_queries", c.num_scene_queries},
                     {"num_modes", c.num_modes},
                     {"horizon_steps", c.horizon_steps},
                     {"self_attn_layers", c.self_attn_layers},
                     {"ffp_attn_layers", c.ffp_attn_layers},
                     {"attn_heads", c.attn_heads},
                     {"cmd_embed_dim", c.cmd_embed_dim},
                     {"se_hidden", c.se_hidden},
                     {"ffn_hidden", c.ffn_hidden},
                     {"head_hidden", c.head_hidden},
                     {"mln_hidden", c.mln_hidden},
                     {"fuser_hidden", c.fuser_hidden},
                     {"waypoint_scale", c.waypoint_scale},
                     {"use_stl", c.use_stl},
                     {"use_navigation", c.use_navigation}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  auto opt = [&j](const char* key, auto& value) {
    if (j.contains(key)) j.at(key).get_to(value);
  };
  opt("grid_h", c.grid_h);
  opt("grid_w", c.grid_w);
  opt("channels", c.channels);
  opt("num_scene_queries", c.num_scene_queries);
  opt("num_modes", c.num_modes);
  opt("horizon_steps", c.horizon_steps);
  opt("self_attn_layers", c.self_attn_layers);
  opt("ffp_attn_layers", c.ffp_attn_layers);
  opt("attn_heads", c.attn_heads);
  opt("cmd_embed_dim", c.cmd_embed_dim);
  opt("se_hidden", c.se_hidden);
  opt("ffn_hidden", c.ffn_hidden);
  opt("head_hidden", c.head_hidden);
  opt("mln_hidden", c.mln_hidden);
  opt("fuser_hidden", c.fuser_hidden);
  opt("waypoint_scale", c.waypoint_scale);
  opt("use_stl", c.use_stl);
  opt("use_navigation", c.use_navigation);
}

const Tensor& ParamStore::add(const std::string& name, Tensor tensor) {
  if (index_.count(name)) throw ContractError("duplicate parameter '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.push_back({name, std::move(tensor)});
  return entries_.back().tensor;
}

const Tensor& ParamStore::operator[](const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
  return entries_[it->second].tensor;
}

Index ParamStore::scalar_count() const {
  Index n = 0;
  for (const auto& e : entries_) n += e.tensor.size();
  return n;
}

void ParamStore::set_requires_grad(bool on) const {
  for (const auto& e : entries_) {
    Tensor t = e.tensor;
    t.set_requires_grad(on);
  }
}

void ParamStore::zero_grad() const {
  for (const auto& e : entries_) {
    Tensor t = e.tensor;
    t.zero_grad();
  }
}

ParamStore ParamStore::clone() const {
  ParamStore out;
  for (const auto& e : entries_) {
    Tensor copy = e.tensor.detach();
    copy.set_requires_grad(e.tensor.requires_grad());
    out.add(e.name, copy);
  }
  return out;
}

ParamStore init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParamStore store;
  Initializer init{store, Rng(mix_seed(seed, 0x5eed))};
  const Index c = cfg.channels, ns = cfg.num_scene_queries, nt = cfg.horizon_steps;

  init.normal("cmd_embedding", {cfg.num_modes, cfg.cmd_embed_dim}, 0.02);
  init.mlp("se", c + cfg.cmd_embed_dim, cfg.se_hidden, c);
  init.uniform("stl.w", {c, ns}, c);  // no bias: a per-token shift cancels in the spatial softmax
  for (int l = 0; l < cfg.self_attn_layers; ++l) init.block("scene." + std::to_string(l), cfg);
  init.uniform("plan.queries", {Index{cfg.num_modes} * nt, c}, c);
  init.block("plan.cross", cfg);
  init.mlp("head", c, cfg.head_hidden, 2);
  init.mlp("mln.gamma", 2 * nt, cfg.mln_hidden, c);
  init.mlp("mln.beta", 2 * nt, cfg.mln_hidden, c);
  for (int l = 0; l < cfg.ffp_attn_layers; ++l) init.block("ffp." + std::to_string(l), cfg);
  init.mlp("fuser", c, cfg.fuser_hidden, ns);

  // γ starts at exactly 1 so the dreaming queries begin as plain layer norm.
  Tensor gamma_bias = store["mln.gamma.b2"];
  gamma_bias.mutable_value().setOnes();
  return store;
}

RowMatrix SceneQuerySet::map(Index token, int grid_h, int grid_w) const {
  if (token < 0 || token >= maps.dim(1)) throw RangeError("token " + std::to_string(token) + " out of range");
  RowMatrix out(grid_h, grid_w);
  const ConstMatrixMap m = maps.matrix();
  for (int r = 0; r < grid_h; ++r) {
    for (int c = 0; c < grid_w; ++c) out(r, c) = m(Index{r} * grid_w + c, token);
  }
  return out;
}

Trajectory ForwardOutput::trajectory() const {
  return Eigen::Map<const Trajectory>(selected.value().data(), selected.dim(0), 2);
}

Trajectory ForwardOutput::mode(Index m) const {
  const Index nt = all_modes.dim(1) / 2;
  return Eigen::Map<const Trajectory>(all_modes.value().data() + m * 2 * nt, nt, 2);
}

Tensor trajectory_tensor(const Trajectory& traj) {
  return Tensor(Shape{traj.rows(), 2}, Eigen::Map<const Vector>(traj.data(), traj.size()));
}

Tensor se_fuse(const Tensor& bev, NavigationCommand cmd, const ParamStore& params, const ModelConfig& cfg) {
  require_shape(bev, {cfg.cells(), cfg.channels}, "se_fuse: bev");
  const Index row = command_row(cmd, cfg);
  const Tensor pooled = reshape(reduce(ReduceOp::Mean, bev, {0}), {1, cfg.channels});
  const Tensor embed = cfg.use_navigation ? gather_rows(params["cmd_embedding"], std::span<const Index>(&row, 1))
                                          : Tensor::zeros({1, cfg.cmd_embed_dim});
  const Tensor parts[] = {pooled, embed};
  const Tensor gate = sigmoid(mlp2(concat(parts, 1), params, "se"));
  return mul(bev, gate);
}

SceneQuerySet stl_tokens(const Tensor& bev_navi, const ParamStore& params, const ModelConfig& cfg) {
  require_shape(bev_navi, {cfg.cells(), cfg.channels}, "stl_tokens: bev");
  SceneQuerySet out;
  out.maps = softmax(matmul(bev_navi, params["stl.w"]), 0);
  out.tokens = matmul(transpose(out.maps), bev_navi);
  return out;
}

Tensor self_attn_stack(const Tensor& tokens, const ParamStore& params, const ModelConfig& cfg,
                       const std::string& prefix, int layers) {
  Tensor x = tokens;
  for (int l = 0; l < layers; ++l) x = attention_block(x, nullptr, params, prefix + "." + std::to_string(l), cfg.attn_heads);
  return x;
}

Tensor scene_self_attn(const Tensor& tokens, const ParamStore& params, const ModelConfig& cfg) {
  return self_attn_stack(tokens, params, cfg, "scene", cfg.self_attn_layers);
}

std::pair<Tensor, Tensor> plan_decode(const Tensor& memory, NavigationCommand cmd, const ParamStore& params,
                                      const ModelConfig& cfg) {
  const Index row = command_row(cmd, cfg);
  if (memory.rank() != 2 || memory.dim(1) != cfg.channels) {
    throw DimensionError("plan_decode: memory " + shape_string(memory.shape()) + " must have " +
                         std::to_string(cfg.channels) + " columns");
  }
  const Tensor h = attention_block(params["plan.queries"], &memory, params, "plan.cross", cfg.attn_heads);
  const Tensor xy = scale(mlp2(h, params, "head"), cfg.waypoint_scale);
  const Index nt = cfg.horizon_steps;
  Tensor all = reshape(xy, {cfg.num_modes, 2 * nt});
  Tensor selected = reshape(gather_rows(all, std::span<const Index>(&row, 1)), {nt, 2});
  return {all, selected};
}

Tensor loss_imitation(const Tensor& selected, const Tensor& gt) {
  if (selected.shape() != gt.shape()) {
    throw DimensionError("loss_imitation: prediction " + shape_string(selected.shape()) + " vs ground truth " +
                         shape_string(gt.shape()));
  }
  return mean(abs(sub(selected, gt)));
}

Tensor mln(const Tensor& tokens, const Tensor& trajectory, const ParamStore& params, const ModelConfig& cfg) {
  require_shape(trajectory, {cfg.horizon_steps, 2}, "mln: trajectory");
  const Tensor motion = reshape(trajectory, {1, 2 * Index{cfg.horizon_steps}});
  const Tensor gamma = mlp2(motion, params, "mln.gamma");
  const Tensor beta = mlp2(motion, params, "mln.beta");
  const Tensor normed = layer_norm(tokens, Tensor::constant({cfg.channels}, 1.0), Tensor::zeros({cfg.channels}), 1);
  return add(mul(normed, gamma), beta);
}

Tensor predict_future(const Tensor& dreaming, const ParamStore& params, const ModelConfig& cfg) {
  return self_attn_stack(dreaming, params, cfg, "ffp", cfg.ffp_attn_layers);
}

std::pair<Tensor, Tensor> token_fuser(const Tensor& pred_tokens, const Tensor& bev_now, const ParamStore& params,
                                      const ModelConfig& cfg) {
  require_shape(pred_tokens, {cfg.num_scene_queries, cfg.channels}, "token_fuser: tokens");
  require_shape(bev_now, {cfg.cells(), cfg.channels}, "token_fuser: bev");
  const Tensor weights = sigmoid(mlp2(bev_now, params, "fuser"));
  return {matmul(weights, pred_tokens), weights};
}

Tensor loss_bev(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw DimensionError("loss_bev: prediction " + shape_string(pred.shape()) + " vs target " +
                         shape_string(target.shape()));
  }
  return mean(square(sub(pred, target)));
}

void check_compatible(const ModelConfig& model, const world::WorldConfig& w) {
  auto mismatch = [](const char* what, int m, int d) {
    throw DimensionError(std::string("model ") + what + " = " + std::to_string(m) + " but dataset " + what + " = " +
                         std::to_string(d));
  };
  if (model.grid_h != w.grid_h) mismatch("grid_h", model.grid_h, w.grid_h);
  if (model.grid_w != w.grid_w) mismatch("grid_w", model.grid_w, w.grid_w);
  if (model.channels != w.channels) mismatch("channels", model.channels, w.channels);
  if (model.horizon_steps != w.horizon_steps) mismatch("horizon_steps", model.horizon_steps, w.horizon_steps);
}

ForwardResult forward(const SceneSample& sample, const ParamStore& params, const ModelConfig& cfg,
                      const ForwardOptions& options) {
  const NavigationCommand cmd = options.command.value_or(sample.command);
  if (sample.horizon() != cfg.horizon_steps) {
    throw DimensionError("forward: sample horizon " + std::to_string(sample.horizon()) + " but model horizon_steps " +
                         std::to_string(cfg.horizon_steps));
  }
  ForwardResult r;
  ForwardOutput& out = r.output;
  const Tensor bev = sample.bev_now.as_tensor();
  out.bev_navi = se_fuse(bev, cmd, params, cfg);

  Tensor memory = out.bev_navi;
  if (cfg.use_stl) {
    SceneQuerySet scene = stl_tokens(out.bev_navi, params, cfg);
    scene.tokens = scene_self_attn(scene.tokens, params, cfg);
    memory = scene.tokens;
    out.scene = std::move(scene);
  }
  std::tie(out.all_modes, out.selected) = plan_decode(memory, cmd, params, cfg);

  Losses& losses = r.losses;
  losses.imitation = loss_imitation(out.selected, trajectory_tensor(sample.gt_trajectory));
  losses.total = scale(losses.imitation, options.weights.imitation);
  if (options.train_mode && cfg.use_stl && options.weights.bev != 0.0) {
    out.dreaming = mln(out.scene->tokens, out.selected, params, cfg);
    out.predicted_future_tokens = predict_future(out.dreaming, params, cfg);
    std::tie(out.predicted_bev, out.fuser_weights) = token_fuser(out.predicted_future_tokens, bev, params, cfg);
    out.has_prediction = true;
    losses.bev = loss_bev(out.predicted_bev, sample.bev_next.as_tensor());
    losses.has_bev = true;
    losses.total = add(losses.total, scale(losses.bev, options.weights.bev));
  }
  return r;
}

}  // namespace ssr::model
