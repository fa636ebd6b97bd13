#include "consor/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>

#include <Eigen/Dense>

#include "consor/archive.hpp"
#include "consor/assignment.hpp"
#include "consor/digest.hpp"
#include "consor/error.hpp"

namespace consor {

using ad::Mode;
using ad::Parameter;
using ad::Tape;
using ad::Tensor;
using ad::Var;

// ---- config ---------------------------------------------------------------

void EncoderConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidConfig, what); };
  if (n_layers < 0) fail("n_layers must be >= 0");
  if (n_heads < 1 || model_dim < 1 || model_dim % n_heads != 0) fail("model_dim must be a positive multiple of n_heads");
  if (feedforward_dim < 1 || latent_dim < 1) fail("feedforward_dim and latent_dim must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail("dropout_rate must lie in [0, 1)");
  if (!(margin > 0.0)) fail("margin must be positive");
  if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
  if (batch_size < 1) fail("batch_size must be positive");
  if (max_epochs < 0) fail("max_epochs must be >= 0");
  if (triplet_budget < 1) fail("triplet_budget must be positive");
}

ordered_json EncoderConfig::to_json() const {
  ordered_json j;
  j["n_layers"] = n_layers;
  j["n_heads"] = n_heads;
  j["model_dim"] = model_dim;
  j["feedforward_dim"] = feedforward_dim;
  j["latent_dim"] = latent_dim;
  j["dropout_rate"] = dropout_rate;
  j["margin"] = margin;
  j["learning_rate"] = learning_rate;
  j["batch_size"] = batch_size;
  j["max_epochs"] = max_epochs;
  j["early_stopping_metric"] = "val_success_rate";
  j["triplet_budget"] = triplet_budget;
  j["rng_seed"] = rng_seed;
  j["augment_container_permutation"] = augment_container_permutation;
  j["placement"] = placement == PlacementMode::OneShot ? "one_shot" : "sequential";
  return j;
}

EncoderConfig EncoderConfig::from_json(const ordered_json& j) {
  EncoderConfig c;
  try {
    c.n_layers = j.value("n_layers", c.n_layers);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.model_dim = j.value("model_dim", c.model_dim);
    c.feedforward_dim = j.value("feedforward_dim", c.feedforward_dim);
    c.latent_dim = j.value("latent_dim", c.latent_dim);
    c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
    c.margin = j.value("margin", c.margin);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.triplet_budget = j.value("triplet_budget", c.triplet_budget);
    c.rng_seed = j.value("rng_seed", c.rng_seed);
    c.augment_container_permutation = j.value("augment_container_permutation", c.augment_container_permutation);
    const std::string placement = j.value("placement", std::string("one_shot"));
    if (placement == "one_shot")
      c.placement = PlacementMode::OneShot;
    else if (placement == "sequential")
      c.placement = PlacementMode::Sequential;
    else
      throw Error(ErrorCode::InvalidConfig, "unknown placement mode '" + placement + "'");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, e.what());
  }
  c.validate();
  return c;
}

// ---- parameters -----------------------------------------------------------

namespace {

Parameter uniform_weight(std::string name, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor w({fan_in, fan_out});
  for (double& v : w.vec()) v = dist(rng);
  return Parameter(std::move(name), std::move(w));
}

Parameter filled(std::string name, std::size_t n, double value) {
  return Parameter(std::move(name), Tensor({n}, value));
}

}  // namespace

EncoderParams EncoderParams::initialize(const EncoderConfig& config, int token_dim, std::uint64_t seed) {
  config.validate();
  if (token_dim < 1) throw Error(ErrorCode::InvalidConfig, "token_dim must be positive");
  Rng rng(seed);
  const auto d = static_cast<std::size_t>(config.model_dim);
  const auto ff = static_cast<std::size_t>(config.feedforward_dim);
  EncoderParams p;
  p.input_w = uniform_weight("input.w", static_cast<std::size_t>(token_dim), d, rng);
  p.input_b = filled("input.b", d, 0.0);
  for (int l = 0; l < config.n_layers; ++l) {
    const std::string pre = "layer" + std::to_string(l) + ".";
    EncoderLayer layer;
    layer.wq = uniform_weight(pre + "attn.wq", d, d, rng);
    layer.bq = filled(pre + "attn.bq", d, 0.0);
    layer.wk = uniform_weight(pre + "attn.wk", d, d, rng);
    layer.bk = filled(pre + "attn.bk", d, 0.0);
    layer.wv = uniform_weight(pre + "attn.wv", d, d, rng);
    layer.bv = filled(pre + "attn.bv", d, 0.0);
    layer.wo = uniform_weight(pre + "attn.wo", d, d, rng);
    layer.bo = filled(pre + "attn.bo", d, 0.0);
    layer.norm1_gain = filled(pre + "norm1.gain", d, 1.0);
    layer.norm1_bias = filled(pre + "norm1.bias", d, 0.0);
    layer.ff1_w = uniform_weight(pre + "ff1.w", d, ff, rng);
    layer.ff1_b = filled(pre + "ff1.b", ff, 0.0);
    layer.ff2_w = uniform_weight(pre + "ff2.w", ff, d, rng);
    layer.ff2_b = filled(pre + "ff2.b", d, 0.0);
    layer.norm2_gain = filled(pre + "norm2.gain", d, 1.0);
    layer.norm2_bias = filled(pre + "norm2.bias", d, 0.0);
    p.layers.push_back(std::move(layer));
  }
  p.output_w = uniform_weight("output.w", d, static_cast<std::size_t>(config.latent_dim), rng);
  p.output_b = filled("output.b", static_cast<std::size_t>(config.latent_dim), 0.0);
  return p;
}

std::vector<Parameter*> EncoderParams::all() {
  std::vector<Parameter*> out{&input_w, &input_b};
  for (auto& l : layers) {
    for (Parameter* p : {&l.wq, &l.bq, &l.wk, &l.bk, &l.wv, &l.bv, &l.wo, &l.bo, &l.norm1_gain, &l.norm1_bias,
                         &l.ff1_w, &l.ff1_b, &l.ff2_w, &l.ff2_b, &l.norm2_gain, &l.norm2_bias})
      out.push_back(p);
  }
  out.push_back(&output_w);
  out.push_back(&output_b);
  return out;
}

std::vector<const Parameter*> EncoderParams::all() const {
  auto mutable_all = const_cast<EncoderParams*>(this)->all();
  return {mutable_all.begin(), mutable_all.end()};
}

std::size_t EncoderParams::parameter_count() const {
  std::size_t n = 0;
  for (const Parameter* p : all()) n += p->value.size();
  return n;
}

bool EncoderParams::operator==(const EncoderParams& other) const {
  auto a = all();
  auto b = other.all();
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i]->name != b[i]->name || !(a[i]->value == b[i]->value)) return false;
  return true;
}

// ---- forward --------------------------------------------------------------

namespace {

Var linear(Tape& tape, const Var& x, Parameter& w, Parameter& b) {
  return ad::add(ad::matmul(x, tape.parameter(w)), tape.parameter(b));
}

Var affine_norm(Tape& tape, const Var& x, Parameter& gain, Parameter& bias) {
  return ad::add(ad::mul(ad::layer_norm(x, 1), tape.parameter(gain)), tape.parameter(bias));
}

Var self_attention(Tape& tape, const Var& x, EncoderLayer& layer, int n_heads) {
  const Var q = linear(tape, x, layer.wq, layer.bq);
  const Var k = linear(tape, x, layer.wk, layer.bk);
  const Var v = linear(tape, x, layer.wv, layer.bv);
  const std::size_t d = x.shape()[1];
  const std::size_t dh = d / static_cast<std::size_t>(n_heads);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> heads;
  for (std::size_t h = 0; h < static_cast<std::size_t>(n_heads); ++h) {
    const Var qh = ad::slice(q, 1, h * dh, (h + 1) * dh);
    const Var kh = ad::slice(k, 1, h * dh, (h + 1) * dh);
    const Var vh = ad::slice(v, 1, h * dh, (h + 1) * dh);
    const Var weights = ad::softmax(ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt), 1);
    heads.push_back(ad::matmul(weights, vh));
  }
  const Var joined = heads.size() == 1 ? heads.front() : ad::concat(heads, 1);
  return linear(tape, joined, layer.wo, layer.bo);
}

}  // namespace

Var encode_on_tape(Tape& tape, const SceneTokens& tokens, EncoderParams& params, const EncoderConfig& config, Mode mode,
                   Rng& rng) {
  if (tokens.dim != params.token_dim())
    throw Error(ErrorCode::ShapeMismatch, "token dim " + std::to_string(tokens.dim) + " vs input projection " +
                                              std::to_string(params.token_dim()));
  if (tokens.count() == 0) throw Error(ErrorCode::ShapeMismatch, "scene has no tokens");
  const double rate = config.dropout_rate;
  Var x = tape.constant(Tensor({tokens.count(), static_cast<std::size_t>(tokens.dim)}, tokens.data));
  x = linear(tape, x, params.input_w, params.input_b);
  for (auto& layer : params.layers) {
    const Var attn = ad::dropout(self_attention(tape, x, layer, config.n_heads), rate, rng, mode);
    x = affine_norm(tape, ad::add(x, attn), layer.norm1_gain, layer.norm1_bias);
    Var hidden = ad::dropout(ad::relu(linear(tape, x, layer.ff1_w, layer.ff1_b)), rate, rng, mode);
    const Var ff = ad::dropout(linear(tape, hidden, layer.ff2_w, layer.ff2_b), rate, rng, mode);
    x = affine_norm(tape, ad::add(x, ff), layer.norm2_gain, layer.norm2_bias);
  }
  return ad::l2_normalize(linear(tape, x, params.output_w, params.output_b), 1);
}

LatentScene encode(const SceneTokens& tokens, const EncoderParams& params, const EncoderConfig& config, Mode mode,
                   std::uint64_t dropout_seed) {
  Tape tape;
  Rng rng(dropout_seed);
  // Parameters are only read: no backward pass runs on this tape.
  const Var out = encode_on_tape(tape, tokens, const_cast<EncoderParams&>(params), config, mode, rng);
  LatentScene latents;
  latents.order = tokens.order;
  latents.dim = static_cast<int>(out.shape()[1]);
  latents.data = out.value().vec();
  return latents;
}

// ---- triplets and loss ----------------------------------------------------

namespace {

using MissingSlots = std::map<std::string, std::vector<int>, std::less<>>;

// Containers still missing instances of each category, ascending.
MissingSlots missing_slots(const ScenePair& pair) {
  MissingSlots missing;
  const Histogram goal_h = category_histogram(pair.goal);
  const Histogram init_h = category_histogram(pair.initial);
  for (const auto& [key, count] : goal_h) {
    const auto it = init_h.find(key);
    const int have = it == init_h.end() ? 0 : it->second;
    for (int i = have; i < count; ++i) missing[key.first].push_back(key.second.index);
  }
  return missing;
}

[[noreturn]] void no_slot(const ScenePair& pair, const std::string& category) {
  throw Error(ErrorCode::IncompatibleScenes, "scene " + pair.scene_id + ": no goal container for " + category);
}

}  // namespace

std::vector<int> goal_containers(const ScenePair& pair, const std::vector<ObjectInstance>& order) {
  const MissingSlots missing = missing_slots(pair);
  std::map<std::string, std::size_t, std::less<>> used;
  std::vector<int> goal;
  goal.reserve(order.size());
  for (const auto& obj : order) {
    if (!obj.receptacle.is_surface()) {
      goal.push_back(obj.receptacle.index);
      continue;
    }
    auto it = missing.find(obj.category);
    std::size_t& next = used[obj.category];
    if (it == missing.end() || next >= it->second.size()) no_slot(pair, obj.category);
    goal.push_back(it->second[next++]);
  }
  return goal;
}

std::vector<int> goal_containers(const ScenePair& pair, const LatentScene& latents) {
  std::vector<int> goal = goal_containers(pair, latents.order);
  const MissingSlots missing = missing_slots(pair);
  std::map<std::string, std::vector<std::size_t>, std::less<>> surface_tokens;
  for (std::size_t i = 0; i < latents.count(); ++i)
    if (latents.order[i].receptacle.is_surface()) surface_tokens[latents.order[i].category].push_back(i);

  std::vector<std::vector<double>> centroids;
  for (const auto& [category, tokens] : surface_tokens) {
    const auto& slots = missing.at(category);
    if (tokens.size() < 2 || std::adjacent_find(slots.begin(), slots.end(), std::not_equal_to<>()) == slots.end())
      continue;
    if (centroids.empty()) centroids = container_centroids(latents, pair.initial.n_containers());
    std::vector<std::vector<double>> weight(tokens.size(), std::vector<double>(slots.size(), 0.0));
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      auto row = latents.row(tokens[i]);
      for (std::size_t j = 0; j < slots.size(); ++j) {
        const auto& c = centroids[static_cast<std::size_t>(slots[j])];
        for (std::size_t d = 0; d < row.size(); ++d) weight[i][j] += row[d] * c[d];
      }
    }
    const std::vector<int> match = max_weight_assignment(weight);
    for (std::size_t i = 0; i < tokens.size(); ++i) goal[tokens[i]] = slots[static_cast<std::size_t>(match[i])];
  }
  return goal;
}

std::vector<Triplet> mine_triplets(const std::vector<int>& goal, std::size_t budget, Rng& rng) {
  std::vector<Triplet> all;
  const std::size_t n = goal.size();
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t p = 0; p < n; ++p) {
      if (p == a || goal[p] != goal[a]) continue;
      for (std::size_t q = 0; q < n; ++q)
        if (goal[q] != goal[a]) all.push_back({a, p, q});
    }
  if (all.size() <= budget) return all;
  // Uniform subset without replacement, kept in enumeration order.
  std::vector<std::size_t> idx(all.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < budget; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(budget);
  std::sort(idx.begin(), idx.end());
  std::vector<Triplet> out;
  out.reserve(budget);
  for (std::size_t i : idx) out.push_back(all[i]);
  return out;
}

std::vector<Triplet> mine_triplets(const ScenePair& pair, const LatentScene& latents, std::size_t budget, Rng& rng) {
  return mine_triplets(goal_containers(pair, latents), budget, rng);
}

Var triplet_margin_loss(const Var& latents, const std::vector<Triplet>& triplets, double margin) {
  Tape& tape = *latents.tape();
  if (triplets.empty()) return tape.constant(Tensor::scalar(0.0));
  std::vector<std::size_t> ai, pi, ni;
  for (const auto& t : triplets) {
    ai.push_back(t.anchor);
    pi.push_back(t.positive);
    ni.push_back(t.negative);
  }
  const Var anchors = ad::gather_rows(latents, ai);
  const Var d_pos = ad::row_norms(ad::sub(anchors, ad::gather_rows(latents, pi)));
  const Var d_neg = ad::row_norms(ad::sub(anchors, ad::gather_rows(latents, ni)));
  return ad::mean(ad::relu(ad::add_scalar(ad::sub(d_pos, d_neg), margin)));
}

// ---- placement ------------------------------------------------------------

std::vector<std::vector<double>> container_centroids(const LatentScene& latents, int n_containers) {
  const auto dim = static_cast<std::size_t>(latents.dim);
  std::vector<std::vector<double>> centroids(static_cast<std::size_t>(std::max(0, n_containers)),
                                             std::vector<double>(dim, 0.0));
  for (std::size_t i = 0; i < latents.count(); ++i) {
    const auto& r = latents.order[i].receptacle;
    if (r.is_surface()) continue;
    auto row = latents.row(i);
    auto& c = centroids.at(static_cast<std::size_t>(r.index));
    for (std::size_t d = 0; d < dim; ++d) c[d] += row[d];
  }
  for (auto& c : centroids) {
    double norm = 0.0;
    for (double v : c) norm += v * v;
    norm = std::max(std::sqrt(norm), 1e-12);
    for (double& v : c) v /= norm;
  }
  return centroids;
}

std::map<InstanceKey, ReceptacleId> assign_by_centroid(const LatentScene& latents, int n_containers) {
  if (n_containers < 1) throw Error(ErrorCode::NoContainers, "scene has no containers");
  const auto dim = static_cast<std::size_t>(latents.dim);
  const auto centroids = container_centroids(latents, n_containers);
  std::map<InstanceKey, ReceptacleId> out;
  for (std::size_t i = 0; i < latents.count(); ++i) {
    const auto& obj = latents.order[i];
    if (!obj.receptacle.is_surface()) continue;
    auto row = latents.row(i);
    int best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < n_containers; ++c) {
      double dot = 0.0;
      for (std::size_t d = 0; d < dim; ++d) dot += row[d] * centroids[static_cast<std::size_t>(c)][d];
      if (dot > best_score) {
        best_score = dot;
        best = c;
      }
    }
    out[{obj.category, obj.instance_index}] = ReceptacleId::container(best);
  }
  return out;
}

PlacementResult predict_placements(const SceneState& initial, const EncoderParams& params, const EncoderConfig& config,
                                   const TokenEncoder& tokens) {
  if (initial.n_containers() < 1) throw Error(ErrorCode::NoContainers, "scene has no containers");
  PlacementResult result;
  if (config.placement == PlacementMode::OneShot) {
    const LatentScene latents = encode(encode_scene(initial, tokens), params, config);
    result.assignments = assign_by_centroid(latents, initial.n_containers());
    SceneState state = initial;
    for (const auto& [key, dest] : result.assignments) state = move_object(state, key.first, key.second, dest);
    result.predicted_goal = std::move(state);
    return result;
  }
  SceneState state = initial;
  while (state.count_on_surface() > 0) {
    const LatentScene latents = encode(encode_scene(state, tokens), params, config);
    const auto step = assign_by_centroid(latents, state.n_containers());
    const auto& [key, dest] = *step.begin();
    result.assignments[key] = dest;
    state = move_object(state, key.first, key.second, dest);
  }
  result.predicted_goal = std::move(state);
  return result;
}

Predictor make_consor_predictor(const EncoderParams& params, const EncoderConfig& config, const TokenEncoder& tokens) {
  return [&params, config, &tokens](const ScenePair& pair) {
    return predict_placements(pair.initial, params, config, tokens).predicted_goal;
  };
}

// ---- training -------------------------------------------------------------

namespace {

ScenePair permute_containers(const ScenePair& pair, Rng& rng) {
  std::vector<int> perm(static_cast<std::size_t>(pair.initial.n_containers()));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  auto remap = [&](const SceneState& s) {
    std::vector<ObjectInstance> objs = s.objects();
    for (auto& o : objs)
      if (!o.receptacle.is_surface()) o.receptacle.index = perm[static_cast<std::size_t>(o.receptacle.index)];
    return SceneState(s.n_containers(), std::move(objs));
  };
  ScenePair out = pair;
  out.initial = remap(pair.initial);
  out.goal = remap(pair.goal);
  return out;
}

struct PreparedScene {
  SceneTokens tokens;
  ScenePair permuted;              // only filled when augmenting
  const ScenePair* pair = nullptr;
  bool has_triplets = false;
};

bool any_triplet(const std::vector<int>& goal) {
  std::map<int, int> sizes;
  for (int g : goal) ++sizes[g];
  return sizes.size() >= 2 && std::any_of(sizes.begin(), sizes.end(), [](const auto& kv) { return kv.second >= 2; });
}

PreparedScene prepare(const ScenePair& pair, const TokenEncoder& encoder) {
  PreparedScene s;
  s.tokens = encode_scene(pair.initial, encoder);
  s.pair = &pair;
  s.has_triplets = any_triplet(goal_containers(pair, s.tokens.order));
  return s;
}

double validation_success(const std::vector<ScenePair>& val, const EncoderParams& params, const EncoderConfig& config,
                          const TokenEncoder& tokens, int workers) {
  if (val.empty()) return 0.0;
  return evaluate_model(make_consor_predictor(params, config, tokens), val, workers).report.overall.success_rate;
}

}  // namespace

TrainResult train(const std::vector<ScenePair>& train_split, const std::vector<ScenePair>& val_split,
                  const TokenEncoder& tokens, const EncoderConfig& config, const TrainOptions& options) {
  config.validate();
  if (train_split.empty()) throw Error(ErrorCode::EmptyDataset, "training split is empty");
  const int workers = std::max(1, options.workers);

  TrainResult result;
  EncoderParams params = EncoderParams::initialize(config, tokens.token_dim(), derive_seed(config.rng_seed, "init"));
  result.params = params;
  result.best_epoch = 0;
  result.best_val_success_rate = -1.0;

  std::vector<PreparedScene> prepared;
  if (!config.augment_container_permutation) {
    prepared.resize(train_split.size());
    const auto n = static_cast<long>(train_split.size());
#pragma omp parallel for schedule(static) num_threads(workers)
    for (long i = 0; i < n; ++i)
      prepared[static_cast<std::size_t>(i)] = prepare(train_split[static_cast<std::size_t>(i)], tokens);
  }

  std::vector<Parameter*> plist = params.all();
  ad::AdamState adam;
  adam.config.learning_rate = config.learning_rate;
  ad::zero_grads(plist);

  std::vector<std::size_t> order(train_split.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto batch = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(config.rng_seed, "shuffle", {static_cast<std::uint64_t>(epoch)}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochLog log;
    log.epoch = epoch;
    double loss_total = 0.0;

    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      const std::size_t count = end - start;

      std::vector<PreparedScene> augmented(config.augment_container_permutation ? count : 0);
      std::vector<std::uint64_t> seeds(count);
      std::size_t used = 0;
      for (std::size_t j = 0; j < count; ++j) {
        const std::size_t scene = order[start + j];
        seeds[j] = derive_seed(config.rng_seed, "step", {static_cast<std::uint64_t>(epoch), scene});
        if (config.augment_container_permutation) {
          Rng perm_rng(derive_seed(seeds[j], "permute"));
          const ScenePair permuted = permute_containers(train_split[scene], perm_rng);
          augmented[j] = prepare(permuted, tokens);
          augmented[j].permuted = permuted;
          augmented[j].pair = &augmented[j].permuted;
        }
        const PreparedScene& s = config.augment_container_permutation ? augmented[j] : prepared[scene];
        used += s.has_triplets ? 1 : 0;
      }
      if (used == 0) continue;
      // The batch loss is the mean of the per-scene losses.
      const double weight = 1.0 / static_cast<double>(used);

      std::exception_ptr failure;
      double batch_loss = 0.0;
      long batch_triplets = 0;
      const auto n = static_cast<long>(count);
#pragma omp parallel for ordered schedule(static, 1) num_threads(workers)
      for (long jj = 0; jj < n; ++jj) {
        const auto j = static_cast<std::size_t>(jj);
        const std::size_t scene = order[start + j];
        const PreparedScene& s = config.augment_container_permutation ? augmented[j] : prepared[scene];
        if (!s.has_triplets) continue;
        Tape tape;
        double value = 0.0;
        std::size_t n_triplets = 0;
        bool ok = true;
        try {
          Rng dropout_rng(derive_seed(seeds[j], "dropout"));
          const Var out = encode_on_tape(tape, s.tokens, params, config, Mode::Train, dropout_rng);
          // Triplets are mined against this pass's latents so that
          // interchangeable surface instances get a consistent matching.
          LatentScene latents{s.tokens.order, static_cast<int>(out.shape()[1]), out.value().vec()};
          Rng triplet_rng(derive_seed(seeds[j], "triplets"));
          const auto triplets = mine_triplets(*s.pair, latents, static_cast<std::size_t>(config.triplet_budget),
                                              triplet_rng);
          n_triplets = triplets.size();
          const Var loss = triplet_margin_loss(out, triplets, config.margin);
          value = loss.value()[0];
          if (!std::isfinite(value))
            throw Error(ErrorCode::NonFiniteLoss, "non-finite loss at epoch " + std::to_string(epoch) + " on scene " +
                                                      train_split[scene].scene_id);
          tape.backward(ad::scale(loss, weight), ad::GradSink::Deferred);
        } catch (...) {
          ok = false;
#pragma omp critical(consor_train_failure)
          if (!failure) failure = std::current_exception();
        }
#pragma omp ordered
        {
          if (ok) {
            tape.flush_parameter_grads();
            batch_loss += value;
            batch_triplets += static_cast<long>(n_triplets);
          }
        }
      }
      if (failure) std::rethrow_exception(failure);

      ad::adam_step(plist, adam);
      ad::zero_grads(plist);
      loss_total += batch_loss;
      log.scenes_with_loss += static_cast<int>(used);
      log.triplets += batch_triplets;
    }

    log.mean_loss = log.scenes_with_loss > 0 ? loss_total / log.scenes_with_loss : 0.0;
    log.val_success_rate = validation_success(val_split, params, config, tokens, workers);
    result.log.push_back(log);
    if (options.on_epoch) options.on_epoch(log);
    if (log.val_success_rate > result.best_val_success_rate) {
      result.best_val_success_rate = log.val_success_rate;
      result.best_epoch = epoch;
      result.params = params;
    }
  }
  if (result.best_epoch == 0) result.best_val_success_rate = 0.0;
  return result;
}

// ---- projection -----------------------------------------------------------

Projection2D pca_project(const std::vector<std::vector<double>>& rows) {
  Projection2D out;
  out.coords.assign(rows.size(), {0.0, 0.0});
  if (rows.empty()) return out;
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto d = static_cast<Eigen::Index>(rows.front().size());
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = rows[static_cast<std::size_t>(i)].at(static_cast<std::size_t>(j));
  x.rowwise() -= x.colwise().mean();
  const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  for (int c = 0; c < 2 && c < d; ++c) {
    Eigen::VectorXd v = eig.eigenvectors().col(d - 1 - c);
    Eigen::Index pivot = 0;
    v.cwiseAbs().maxCoeff(&pivot);
    if (v(pivot) < 0) v = -v;  // deterministic sign
    const Eigen::VectorXd proj = x * v;
    for (Eigen::Index i = 0; i < n; ++i) out.coords[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] = proj(i);
    out.variance[static_cast<std::size_t>(c)] = std::max(0.0, eig.eigenvalues()(d - 1 - c));
  }
  return out;
}

std::vector<LatentRow> export_latents(const SceneState& initial, const EncoderParams& params,
                                      const EncoderConfig& config, const TokenEncoder& tokens) {
  const LatentScene latents = encode(encode_scene(initial, tokens), params, config);
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < latents.count(); ++i) {
    auto r = latents.row(i);
    rows.emplace_back(r.begin(), r.end());
  }
  const Projection2D proj = pca_project(rows);
  std::vector<LatentRow> out;
  for (std::size_t i = 0; i < latents.count(); ++i) out.push_back({latents.order[i], rows[i], proj.coords[i]});
  return out;
}

// ---- checkpoints ----------------------------------------------------------

CheckpointInfo save_checkpoint(const std::filesystem::path& dir, const EncoderParams& params, CheckpointInfo info) {
  std::vector<ad::NamedArray> arrays;
  info.names.clear();
  for (const Parameter* p : params.all()) {
    arrays.push_back({p->name, p->value});
    info.names.push_back(p->name);
  }
  info.token_dim = params.token_dim();
  const std::string bytes = ad::write_archive(arrays);
  info.archive_digest = sha256_hex(bytes);
  write_file(dir / "checkpoint.bin", bytes);

  ordered_json j;
  j["format"] = "consor-checkpoint-1";
  j["config"] = info.config.to_json();
  j["token_dim"] = info.token_dim;
  j["dataset_digest"] = info.dataset_digest;
  j["embedding_digest"] = info.embedding_digest;
  j["archive"] = "checkpoint.bin";
  j["archive_sha256"] = info.archive_digest;
  j["arrays"] = info.names;
  write_file(dir / "checkpoint.json", j.dump(2) + "\n");
  return info;
}

EncoderParams load_checkpoint(const std::filesystem::path& dir, CheckpointInfo* info_out) {
  CheckpointInfo info;
  ordered_json j;
  try {
    j = ordered_json::parse(read_file(dir / "checkpoint.json"));
    info.config = EncoderConfig::from_json(j.at("config"));
    info.token_dim = j.at("token_dim").get<int>();
    info.dataset_digest = j.at("dataset_digest").get<std::string>();
    info.embedding_digest = j.at("embedding_digest").get<std::string>();
    info.archive_digest = j.at("archive_sha256").get<std::string>();
    info.names = j.at("arrays").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, "checkpoint manifest: " + std::string(e.what()));
  }
  const std::string bytes = read_file(dir / "checkpoint.bin");
  if (sha256_hex(bytes) != info.archive_digest)
    throw Error(ErrorCode::ArtifactMismatch, "checkpoint.bin does not match the digest in checkpoint.json");
  const auto arrays = ad::read_archive(bytes);

  EncoderParams params = EncoderParams::initialize(info.config, info.token_dim, 0);
  auto plist = params.all();
  if (arrays.size() != plist.size() || info.names.size() != plist.size())
    throw Error(ErrorCode::ArtifactMismatch, "checkpoint holds " + std::to_string(arrays.size()) +
                                                 " arrays, config expects " + std::to_string(plist.size()));
  for (std::size_t i = 0; i < plist.size(); ++i) {
    if (arrays[i].name != plist[i]->name || info.names[i] != plist[i]->name)
      throw Error(ErrorCode::ArtifactMismatch, "array " + std::to_string(i) + " is '" + arrays[i].name +
                                                   "', expected '" + plist[i]->name + "'");
    if (arrays[i].value.shape() != plist[i]->value.shape())
      throw Error(ErrorCode::ArtifactMismatch, "array '" + arrays[i].name + "' has shape " +
                                                   ad::shape_string(arrays[i].value.shape()) + ", expected " +
                                                   ad::shape_string(plist[i]->value.shape()));
    plist[i]->value = arrays[i].value;
    plist[i]->zero_grad();
  }
  if (info_out) *info_out = std::move(info);
  return params;
}

}  // namespace consor
