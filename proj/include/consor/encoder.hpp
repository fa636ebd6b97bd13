#pragma once

// Transformer scene encoder: per-object tokens -> unit-norm latents, trained
// with a within-scene triplet margin loss. Unarranged objects are placed in
// the container whose latent centroid is most cosine-similar.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "consor/autodiff.hpp"
#include "consor/dataset.hpp"
#include "consor/embedding.hpp"
#include "consor/metrics.hpp"
#include "consor/optim.hpp"

namespace consor {

enum class PlacementMode {
  OneShot,     // every surface object placed from the initial latents
  Sequential,  // re-encode after each placement (ablation)
};

struct EncoderConfig {
  int n_layers = 3;
  int n_heads = 4;
  int model_dim = 128;
  int feedforward_dim = 256;
  int latent_dim = 32;
  double dropout_rate = 0.5;
  double margin = 0.5;
  double learning_rate = 1e-3;
  int batch_size = 64;
  int max_epochs = 30;
  int triplet_budget = 256;
  std::uint64_t rng_seed = 17;
  bool augment_container_permutation = false;
  PlacementMode placement = PlacementMode::OneShot;

  /// Throws Error(InvalidConfig).
  void validate() const;
  ordered_json to_json() const;
  static EncoderConfig from_json(const ordered_json& j);

  bool operator==(const EncoderConfig&) const = default;
};

struct EncoderLayer {
  ad::Parameter wq, bq, wk, bk, wv, bv, wo, bo;
  ad::Parameter norm1_gain, norm1_bias;
  ad::Parameter ff1_w, ff1_b, ff2_w, ff2_b;
  ad::Parameter norm2_gain, norm2_bias;
};

struct EncoderParams {
  ad::Parameter input_w, input_b;
  std::vector<EncoderLayer> layers;
  ad::Parameter output_w, output_b;

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases, unit norm gains.
  static EncoderParams initialize(const EncoderConfig& config, int token_dim, std::uint64_t seed);

  /// Stable load order.
  std::vector<ad::Parameter*> all();
  std::vector<const ad::Parameter*> all() const;
  int token_dim() const { return static_cast<int>(input_w.value.dim(0)); }
  std::size_t parameter_count() const;

  bool operator==(const EncoderParams& other) const;
};

/// One unit-norm latent per token, aligned with SceneTokens::order.
struct LatentScene {
  std::vector<ObjectInstance> order;
  int dim = 0;
  std::vector<double> data;

  std::size_t count() const { return order.size(); }
  std::span<const double> row(std::size_t i) const {
    return {data.data() + i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
  }
};

/// Differentiable forward pass. In Train mode parameters are bound as tape
/// leaves and dropout draws from `rng`; in Eval mode they are constants.
ad::Var encode_on_tape(ad::Tape& tape, const SceneTokens& tokens, EncoderParams& params, const EncoderConfig& config,
                       ad::Mode mode, Rng& rng);

/// Read-only forward pass. Throws Error(ShapeMismatch).
LatentScene encode(const SceneTokens& tokens, const EncoderParams& params, const EncoderConfig& config,
                   ad::Mode mode = ad::Mode::Eval, std::uint64_t dropout_seed = 0);

struct Triplet {
  std::size_t anchor = 0, positive = 0, negative = 0;
  bool operator==(const Triplet&) const = default;
};

/// Goal container of every token of `order` (the initial-state tokens).
/// Nulls and prearranged objects keep their container; surface instances of a
/// category fill the containers still missing that category, in index order.
std::vector<int> goal_containers(const ScenePair& pair, const std::vector<ObjectInstance>& order);

/// As above, except that when several surface instances of one category
/// compete for different containers they are matched to them by maximum
/// total latent-centroid agreement. Instances of a category are
/// interchangeable, so any matching describes the same goal.
std::vector<int> goal_containers(const ScenePair& pair, const LatentScene& latents);

/// All (a, p, n) with goal[a] == goal[p], a != p, goal[n] != goal[a], uniformly
/// subsampled to `budget`. Empty when fewer than two containers are used.
std::vector<Triplet> mine_triplets(const std::vector<int>& goal, std::size_t budget, Rng& rng);
std::vector<Triplet> mine_triplets(const ScenePair& pair, const LatentScene& latents, std::size_t budget, Rng& rng);

/// mean over triplets of max(0, |a-p| - |a-n| + margin); constant 0 when empty.
ad::Var triplet_margin_loss(const ad::Var& latents, const std::vector<Triplet>& triplets, double margin);

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  double val_success_rate = 0.0;
  long triplets = 0;
  int scenes_with_loss = 0;
};

struct TrainResult {
  EncoderParams params;
  std::vector<EpochLog> log;
  int best_epoch = 0;  // 0 = initialization
  double best_val_success_rate = 0.0;
};

struct TrainOptions {
  int workers = 1;
  std::function<void(const EpochLog&)> on_epoch;
};

/// Mini-batch training with early-stopping snapshot on validation success
/// rate. Reads only initial and goal states. Throws Error(EmptyDataset),
/// Error(NonFiniteLoss).
TrainResult train(const std::vector<ScenePair>& train_split, const std::vector<ScenePair>& val_split,
                  const TokenEncoder& tokens, const EncoderConfig& config, const TrainOptions& options = {});

/// Normalized mean latent of the tokens in each container.
std::vector<std::vector<double>> container_centroids(const LatentScene& latents, int n_containers);

/// Container centroid = normalized mean of the latents currently in it;
/// each surface object goes to the argmax dot product, ties to the lowest index.
/// Throws Error(NoContainers).
std::map<InstanceKey, ReceptacleId> assign_by_centroid(const LatentScene& latents, int n_containers);

struct PlacementResult {
  std::map<InstanceKey, ReceptacleId> assignments;
  SceneState predicted_goal;
};

PlacementResult predict_placements(const SceneState& initial, const EncoderParams& params, const EncoderConfig& config,
                                   const TokenEncoder& tokens);

Predictor make_consor_predictor(const EncoderParams& params, const EncoderConfig& config, const TokenEncoder& tokens);

struct Projection2D {
  std::vector<std::array<double, 2>> coords;
  std::array<double, 2> variance{};  // captured by components 1 and 2
};

/// Top-2 principal components of the rows (centred).
Projection2D pca_project(const std::vector<std::vector<double>>& rows);

struct LatentRow {
  ObjectInstance token;
  std::vector<double> latent;
  std::array<double, 2> projection{};
};

std::vector<LatentRow> export_latents(const SceneState& initial, const EncoderParams& params,
                                      const EncoderConfig& config, const TokenEncoder& tokens);

struct CheckpointInfo {
  EncoderConfig config;
  int token_dim = 0;
  std::string dataset_digest;
  std::string embedding_digest;
  std::vector<std::string> names;  // load order
  std::string archive_digest;
};

/// Writes checkpoint.bin and checkpoint.json into `dir`; returns the info written.
CheckpointInfo save_checkpoint(const std::filesystem::path& dir, const EncoderParams& params, CheckpointInfo info);
/// Throws Error(ArtifactMismatch) if the archive does not match its manifest.
EncoderParams load_checkpoint(const std::filesystem::path& dir, CheckpointInfo* info = nullptr);

}  // namespace consor
