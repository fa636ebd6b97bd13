#include "consor/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "consor/baseline_cf.hpp"
#include "consor/digest.hpp"
#include "consor/embedding.hpp"
#include "consor/encoder.hpp"
#include "consor/error.hpp"
#include "consor/llm.hpp"
#include "consor/metrics.hpp"

namespace consor::cli {

namespace fs = std::filesystem;

namespace {

// Bad arguments that only show up after parsing (exit 2).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::uint64_t seed = 17;
  int workers = 1;
  std::string out;
  std::string data_root;
  std::string embeddings;

  fs::path data_dir() const { return data_root.empty() ? default_data_dir() : fs::path(data_root); }
  fs::path embedding_path() const {
    return embeddings.empty() ? data_dir() / "embeddings" / "objects-50d.txt" : fs::path(embeddings);
  }
  fs::path out_dir(std::string_view command) const { return out.empty() ? fs::path("runs") / command : fs::path(out); }
};

struct EncoderFlags {
  EncoderConfig config;
  std::string placement = "one_shot";
};

void add_encoder_flags(CLI::App* cmd, EncoderFlags& f) {
  auto& c = f.config;
  cmd->add_option("--max-epochs", c.max_epochs, "Training epochs")->capture_default_str();
  cmd->add_option("--lr", c.learning_rate, "Adam learning rate")->capture_default_str();
  cmd->add_option("--batch-size", c.batch_size, "Scenes per optimizer step")->capture_default_str();
  cmd->add_option("--dropout", c.dropout_rate, "Dropout rate")->capture_default_str();
  cmd->add_option("--margin", c.margin, "Triplet margin")->capture_default_str();
  cmd->add_option("--layers", c.n_layers, "Encoder layers")->capture_default_str();
  cmd->add_option("--heads", c.n_heads, "Attention heads")->capture_default_str();
  cmd->add_option("--model-dim", c.model_dim, "Model width")->capture_default_str();
  cmd->add_option("--ff-dim", c.feedforward_dim, "Feed-forward width")->capture_default_str();
  cmd->add_option("--latent-dim", c.latent_dim, "Output latent size")->capture_default_str();
  cmd->add_option("--triplet-budget", c.triplet_budget, "Triplets sampled per scene")->capture_default_str();
  cmd->add_flag("--augment-permutation", c.augment_container_permutation, "Shuffle container indices while training");
  cmd->add_option("--placement", f.placement, "one_shot or sequential")
      ->check(CLI::IsMember({"one_shot", "sequential"}))
      ->capture_default_str();
}

EncoderConfig resolve(const EncoderFlags& f, std::uint64_t seed) {
  EncoderConfig c = f.config;
  c.rng_seed = seed;
  c.placement = f.placement == "sequential" ? PlacementMode::Sequential : PlacementMode::OneShot;
  try {
    c.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  return c;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

class RunManifest {
 public:
  RunManifest(std::string command, fs::path dir) : dir_(std::move(dir)), t0_(std::chrono::steady_clock::now()) {
    j_["command"] = std::move(command);
    j_["config"] = ordered_json::object();
    j_["dataset_digest"] = nullptr;
    j_["checkpoint_digest"] = nullptr;
  }
  ordered_json& config() { return j_["config"]; }
  void dataset(const std::string& digest) { j_["dataset_digest"] = digest; }
  void checkpoint(const std::string& digest) { j_["checkpoint_digest"] = digest; }
  void artifact(const fs::path& path) { artifacts_.push_back(path); }

  ~RunManifest() {
    if (written_) return;
    try {
      write(false);
    } catch (...) {
    }
  }
  RunManifest(const RunManifest&) = delete;
  RunManifest& operator=(const RunManifest&) = delete;

  void write(bool ok) {
    written_ = true;
    j_["status"] = ok ? "ok" : "failed";
    j_["wall_clock_seconds"] = seconds_since(t0_);
    ordered_json list = ordered_json::array();
    for (const auto& p : artifacts_) {
      if (!fs::exists(p)) continue;
      list.push_back({{"path", fs::relative(p, dir_).generic_string()}, {"sha256", sha256_file(p)}});
    }
    j_["artifacts"] = std::move(list);
    fs::create_directories(dir_);
    write_file(dir_ / "run_manifest.json", j_.dump(2) + "\n");
  }

 private:
  fs::path dir_;
  std::chrono::steady_clock::time_point t0_;
  ordered_json j_;
  std::vector<fs::path> artifacts_;
  bool written_ = false;
};

ordered_json globals_json(const Globals& g) {
  return {{"seed", g.seed}, {"workers", g.workers}, {"data_root", g.data_dir().string()}};
}

fs::path put(const fs::path& path, std::string_view text, RunManifest& manifest) {
  fs::create_directories(path.parent_path());
  write_file(path, text);
  manifest.artifact(path);
  return path;
}

struct LoadedData {
  Dataset data;
  DatasetManifest manifest;
};

LoadedData load_data(const std::string& dir) {
  LoadedData d;
  d.data = load_dataset(dir, &d.manifest);
  return d;
}

struct LoadedEmbedding {
  EmbeddingTable table;
  std::string digest;
};

LoadedEmbedding load_embedding(const fs::path& path) {
  return {EmbeddingTable::load(path), sha256_file(path)};
}

void check_checkpoint(const CheckpointInfo& info, const std::string& dataset_digest, const std::string& embedding_digest) {
  if (info.dataset_digest != dataset_digest)
    throw Error(ErrorCode::ArtifactMismatch, "checkpoint was trained on dataset " + info.dataset_digest +
                                                 ", not " + dataset_digest);
  if (info.embedding_digest != embedding_digest)
    throw Error(ErrorCode::ArtifactMismatch, "checkpoint was trained with embedding table " + info.embedding_digest +
                                                 ", not " + embedding_digest);
}

const std::vector<ScenePair>& split_or_usage(const Dataset& data, const std::string& name) {
  if (std::find(kSplitNames.begin(), kSplitNames.end(), name) == kSplitNames.end())
    throw UsageError("unknown split '" + name + "'");
  return split_by_name(data, name);
}

std::map<SchemaId, SimilarityMatrix> fit_cf(const std::vector<ScenePair>& train_split) {
  std::set<SchemaId> present;
  for (const auto& p : train_split) present.insert(p.schema);
  std::map<SchemaId, SimilarityMatrix> sims;
  for (SchemaId s : present) sims[s] = fit_pairwise_similarity(train_split, s);
  return sims;
}

std::string format_rate(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

// ---- generate -------------------------------------------------------------

struct GenerateFlags {
  int train = 1980;
  int val = 110;
  int test = 110;
  int unseen = 30;
  std::vector<std::string> schemas;
  int max_empty = 1;
};

int cmd_generate(const Globals& g, const GenerateFlags& f, std::ostream& out, std::string& stage) {
  stage = "configure";
  GenerationConfig config;
  config.seed = g.seed;
  config.workers = g.workers;
  config.train_per_schema = f.train;
  config.val_per_schema = f.val;
  config.test_per_schema = f.test;
  config.test_unseen_per_schema = f.unseen;
  config.max_empty_containers = f.max_empty;
  if (!f.schemas.empty()) {
    config.schemas.clear();
    try {
      for (const auto& s : f.schemas) config.schemas.push_back(parse_schema(s));
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
  }
  try {
    config.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }

  const fs::path dir = g.out_dir("generate");
  RunManifest manifest("generate", dir);
  manifest.config() = globals_json(g);
  manifest.config()["generation"] = config.to_json();

  stage = "load grouping tables";
  const GroupingTables tables = GroupingTables::load(g.data_dir() / "groupings");
  stage = "generate";
  const Dataset data = generate_dataset(config, tables);
  stage = "write dataset";
  const DatasetManifest written = write_dataset(dir, data, config);
  manifest.dataset(written.digest);
  for (const auto& [file, digest] : written.file_digests) manifest.artifact(dir / file);
  manifest.artifact(dir / "manifest.json");
  manifest.write(true);
  out << "dataset " << written.digest << "\n";
  for (const auto& [split, count] : written.counts) out << "  " << split << ": " << count << "\n";
  return kOk;
}

// ---- train ----------------------------------------------------------------

int cmd_train(const Globals& g, const std::string& data_dir, const EncoderFlags& f, std::ostream& out,
              std::string& stage) {
  const EncoderConfig config = resolve(f, g.seed);
  const fs::path dir = g.out_dir("train");
  RunManifest manifest("train", dir);
  manifest.config() = globals_json(g);
  manifest.config()["data"] = data_dir;
  manifest.config()["embeddings"] = g.embedding_path().string();
  manifest.config()["encoder"] = config.to_json();

  stage = "load dataset";
  const LoadedData d = load_data(data_dir);
  manifest.dataset(d.manifest.digest);
  stage = "load embeddings";
  const LoadedEmbedding emb = load_embedding(g.embedding_path());
  TokenEncoder tokens;
  tokens.table = &emb.table;

  stage = "train";
  std::string log;
  TrainOptions options;
  options.workers = g.workers;
  options.on_epoch = [&](const EpochLog& e) {
    ordered_json row{{"epoch", e.epoch},
                     {"mean_loss", e.mean_loss},
                     {"val_success_rate", e.val_success_rate},
                     {"triplets", e.triplets},
                     {"scenes_with_loss", e.scenes_with_loss}};
    log += row.dump() + "\n";
    out << "epoch " << e.epoch << "  loss " << e.mean_loss << "  val M^SR " << format_rate(e.val_success_rate) << "\n";
    out.flush();
  };
  const TrainResult result = train(d.data.train, d.data.val, tokens, config, options);

  stage = "write checkpoint";
  CheckpointInfo info;
  info.config = config;
  info.token_dim = tokens.token_dim();
  info.dataset_digest = d.manifest.digest;
  info.embedding_digest = emb.digest;
  info = save_checkpoint(dir, result.params, info);
  manifest.checkpoint(info.archive_digest);
  manifest.artifact(dir / "checkpoint.bin");
  manifest.artifact(dir / "checkpoint.json");
  put(dir / "train_log.jsonl", log, manifest);
  manifest.config()["best_epoch"] = result.best_epoch;
  manifest.config()["best_val_success_rate"] = result.best_val_success_rate;
  manifest.write(true);
  out << "best epoch " << result.best_epoch << " (val M^SR " << format_rate(result.best_val_success_rate)
      << "), checkpoint " << info.archive_digest << "\n";
  return kOk;
}

// ---- eval -----------------------------------------------------------------

struct EvalFlags {
  std::string data;
  std::string model;
  std::string checkpoint;
  std::string split = "test_seen";
  std::string report = "both";
  std::string llm_client = "http";
  std::string llm_config;
};

void write_reports(const fs::path& dir, const Evaluation& ev, const std::string& format, RunManifest& manifest,
                   std::ostream& out) {
  put(dir / "records.jsonl", records_to_jsonl(ev.records), manifest);
  const std::string md = render_report(ev.report, ReportFormat::Markdown);
  const std::string js = render_report(ev.report, ReportFormat::Structured);
  if (format != "structured") put(dir / "report.md", md, manifest);
  if (format != "markdown") put(dir / "report.json", js, manifest);
  out << (format == "structured" ? js : md);
}

int cmd_eval(const Globals& g, const EvalFlags& f, std::ostream& out, std::string& stage) {
  if (f.model == "cf" && f.split == "test_unseen")
    throw UsageError("the cf baseline cannot score test_unseen: its similarities only cover training categories");
  if (f.model == "consor" && f.checkpoint.empty()) throw UsageError("--model consor needs --checkpoint");

  const fs::path dir = g.out_dir("eval");
  RunManifest manifest("eval", dir);
  manifest.config() = globals_json(g);
  manifest.config()["data"] = f.data;
  manifest.config()["model"] = f.model;
  manifest.config()["split"] = f.split;
  manifest.config()["report"] = f.report;

  stage = "load dataset";
  const LoadedData d = load_data(f.data);
  manifest.dataset(d.manifest.digest);
  const std::vector<ScenePair>& split = split_or_usage(d.data, f.split);

  Predictor predictor;
  // Keep whatever the predictor captures by reference alive until scoring ends.
  std::optional<LoadedEmbedding> emb;
  std::optional<TokenEncoder> tokens;
  EncoderParams params;
  CheckpointInfo info;
  std::map<SchemaId, SimilarityMatrix> sims;

  if (f.model == "consor") {
    stage = "load checkpoint";
    emb = load_embedding(g.embedding_path());
    params = load_checkpoint(f.checkpoint, &info);
    check_checkpoint(info, d.manifest.digest, emb->digest);
    manifest.checkpoint(info.archive_digest);
    manifest.config()["checkpoint"] = f.checkpoint;
    manifest.config()["encoder"] = info.config.to_json();
    tokens.emplace();
    tokens->table = &emb->table;
    predictor = make_consor_predictor(params, info.config, *tokens);
  } else if (f.model == "cf") {
    stage = "fit similarities";
    sims = fit_cf(d.data.train);
    predictor = make_cf_predictor(sims);
  } else if (f.model == "llm") {
    stage = "configure completion client";
    std::shared_ptr<CompletionClient> client;
    if (f.llm_client == "oracle") {
      client = std::make_shared<OracleClient>(split);
    } else if (f.llm_client == "empty") {
      client = std::make_shared<EmptyClient>();
    } else {
      HttpClientConfig http;
      if (!f.llm_config.empty()) http = HttpClientConfig::from_json(ordered_json::parse(read_file(f.llm_config)));
      if (http.audit_log.empty()) http.audit_log = dir / "llm_audit.jsonl";
      manifest.config()["llm"] = http.to_json();
      manifest.artifact(http.audit_log);
      client = std::make_shared<HttpCompletionClient>(http);
    }
    manifest.config()["llm_client"] = f.llm_client;
    predictor = make_llm_predictor(pick_demonstrations(d.data.train), client);
  } else {
    predictor = [](const ScenePair& pair) { return pair.goal; };
  }

  stage = "evaluate";
  const Evaluation ev = evaluate_model(predictor, split, g.workers, f.model, f.split);
  stage = "write reports";
  write_reports(dir, ev, f.report, manifest, out);
  manifest.write(true);
  return kOk;
}

// ---- sweep ----------------------------------------------------------------

struct SweepFlags {
  std::string data;
  std::vector<int> sizes{124, 496, 1984};
  std::string split = "test_seen";
};

ordered_json nonzero_distribution(const std::vector<EvalRecord>& records) {
  std::vector<double> v;
  for (const auto& r : records)
    if (r.sed > 0) v.push_back(r.sed);
  if (v.empty()) return nullptr;
  std::sort(v.begin(), v.end());
  // Linear interpolation between closest ranks.
  auto q = [&](double p) {
    const double pos = p * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  return {{"min", v.front()}, {"q1", q(0.25)}, {"median", q(0.5)}, {"q3", q(0.75)}, {"max", v.back()}};
}

int cmd_sweep(const Globals& g, const SweepFlags& f, const EncoderFlags& ef, std::ostream& out, std::string& stage) {
  if (f.sizes.empty()) throw UsageError("--sizes needs at least one value");
  for (int s : f.sizes)
    if (s <= 0) throw UsageError("sweep sizes must be positive, got " + std::to_string(s));
  if (f.split == "test_unseen") throw UsageError("the sweep scores the cf baseline, which cannot score test_unseen");
  const EncoderConfig config = resolve(ef, g.seed);

  const fs::path dir = g.out_dir("sweep");
  RunManifest manifest("sweep", dir);
  manifest.config() = globals_json(g);
  manifest.config()["data"] = f.data;
  manifest.config()["sizes"] = f.sizes;
  manifest.config()["split"] = f.split;
  manifest.config()["encoder"] = config.to_json();

  stage = "load dataset";
  const LoadedData d = load_data(f.data);
  manifest.dataset(d.manifest.digest);
  const std::vector<ScenePair>& test = split_or_usage(d.data, f.split);
  std::vector<std::vector<ScenePair>> subsets;
  for (int s : f.sizes) {
    try {
      subsets.push_back(take_per_schema(d.data.train, s));
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
  }
  stage = "load embeddings";
  const LoadedEmbedding emb = load_embedding(g.embedding_path());
  TokenEncoder tokens;
  tokens.table = &emb.table;

  ordered_json summary = ordered_json::array();
  std::string csv = "size,model,train_pairs,avg_success_rate,nsed_mean,nsed_sd,nsed_min,nsed_q1,nsed_median,nsed_q3,nsed_max\n";
  bool all_ok = true;
  for (std::size_t k = 0; k < f.sizes.size(); ++k) {
    const int size = f.sizes[k];
    const auto& subset = subsets[k];
    const fs::path size_dir = dir / ("size-" + std::to_string(size));
    auto leg = [&](const std::string& model, const std::function<Evaluation()>& body) {
      stage = model + " at size " + std::to_string(size);
      ordered_json row{{"size", size}, {"model", model}, {"train_pairs", subset.size()}};
      try {
        const Evaluation ev = body();
        write_reports(size_dir / model, ev, "both", manifest, out);
        const double avg = schema_average_success(ev.report);
        const ordered_json dist = nonzero_distribution(ev.records);
        row["avg_success_rate"] = avg;
        row["nsed_mean"] = ev.report.overall.nsed_mean ? ordered_json(*ev.report.overall.nsed_mean) : ordered_json();
        row["nsed_sd"] = ev.report.overall.nsed_sd ? ordered_json(*ev.report.overall.nsed_sd) : ordered_json();
        row["nsed_distribution"] = dist;
        auto cell = [](const ordered_json& v) {
          if (v.is_null()) return std::string();
          char buf[32];
          std::snprintf(buf, sizeof buf, "%.6g", v.get<double>());
          return std::string(buf);
        };
        csv += std::to_string(size) + "," + model + "," + std::to_string(subset.size()) + "," + cell(avg) + "," +
               cell(row["nsed_mean"]) + "," + cell(row["nsed_sd"]);
        for (const char* key : {"min", "q1", "median", "q3", "max"})
          csv += "," + (dist.is_null() ? std::string() : cell(dist[key]));
        csv += "\n";
      } catch (const std::exception& e) {
        all_ok = false;
        row["error"] = e.what();
        out << "sweep leg failed (" << stage << "): " << e.what() << "\n";
      }
      summary.push_back(row);
      // Rewritten after every leg so partial results survive a later failure.
      put(dir / "summary.json", summary.dump(2) + "\n", manifest);
      put(dir / "summary.csv", csv, manifest);
    };

    leg("consor", [&] {
      const TrainResult result = train(subset, d.data.val, tokens, config, {g.workers, {}});
      CheckpointInfo info;
      info.config = config;
      info.token_dim = tokens.token_dim();
      info.dataset_digest = d.manifest.digest;
      info.embedding_digest = emb.digest;
      save_checkpoint(size_dir / "consor", result.params, info);
      manifest.artifact(size_dir / "consor" / "checkpoint.bin");
      manifest.artifact(size_dir / "consor" / "checkpoint.json");
      return evaluate_model(make_consor_predictor(result.params, config, tokens), test, g.workers, "consor", f.split);
    });
    leg("cf", [&] {
      const auto sims = fit_cf(subset);
      return evaluate_model(make_cf_predictor(sims), test, g.workers, "cf", f.split);
    });
  }
  manifest.write(all_ok);
  return all_ok ? kOk : kRuntimeFailure;
}

// ---- project --------------------------------------------------------------

struct ProjectFlags {
  std::string data;
  std::string model;
  std::string scene_id;
};

int cmd_project(const Globals& g, const ProjectFlags& f, std::ostream& out, std::string& stage) {
  const fs::path dir = g.out_dir("project");
  RunManifest manifest("project", dir);
  manifest.config() = globals_json(g);
  manifest.config()["data"] = f.data;
  manifest.config()["checkpoint"] = f.model;
  manifest.config()["scene_id"] = f.scene_id;

  stage = "load dataset";
  const LoadedData d = load_data(f.data);
  manifest.dataset(d.manifest.digest);
  const ScenePair* pair = nullptr;
  for (auto name : kSplitNames)
    for (const auto& p : split_by_name(d.data, name))
      if (p.scene_id == f.scene_id) pair = &p;
  if (pair == nullptr) throw Error(ErrorCode::UnknownScene, "no scene '" + f.scene_id + "' in " + f.data);

  stage = "load checkpoint";
  const LoadedEmbedding emb = load_embedding(g.embedding_path());
  CheckpointInfo info;
  const EncoderParams params = load_checkpoint(f.model, &info);
  check_checkpoint(info, d.manifest.digest, emb.digest);
  manifest.checkpoint(info.archive_digest);
  TokenEncoder tokens;
  tokens.table = &emb.table;

  stage = "project";
  const auto rows = export_latents(pair->initial, params, info.config, tokens);
  std::string csv = "category,instance,receptacle";
  for (int i = 0; i < info.config.latent_dim; ++i) csv += ",l" + std::to_string(i);
  csv += ",pc1,pc2\n";
  char buf[32];
  for (const auto& r : rows) {
    csv += r.token.category + "," + std::to_string(r.token.instance_index) + "," + r.token.receptacle.to_string();
    for (double v : r.latent) {
      std::snprintf(buf, sizeof buf, ",%.17g", v);
      csv += buf;
    }
    for (double v : r.projection) {
      std::snprintf(buf, sizeof buf, ",%.17g", v);
      csv += buf;
    }
    csv += "\n";
  }
  const fs::path file = put(dir / "latents.csv", csv, manifest);
  manifest.write(true);
  out << rows.size() << " tokens -> " << file.string() << "\n";
  return kOk;
}

}  // namespace

std::vector<ScenePair> take_per_schema(const std::vector<ScenePair>& train, int total) {
  std::map<SchemaId, int> available;
  for (const auto& p : train) ++available[p.schema];
  if (available.empty()) throw Error(ErrorCode::EmptyDataset, "training split is empty");
  const int n = static_cast<int>(available.size());
  if (total <= 0) throw Error(ErrorCode::InvalidConfig, "training size must be positive");
  if (total < n)
    throw Error(ErrorCode::InvalidConfig, "training size " + std::to_string(total) + " is smaller than the " +
                                              std::to_string(n) + " schemas present");
  const int per = total / n;
  for (const auto& [schema, count] : available)
    if (count < per)
      throw Error(ErrorCode::InvalidConfig, "training size " + std::to_string(total) + " needs " + std::to_string(per) +
                                                " " + std::string(to_string(schema)) + " scenes; only " +
                                                std::to_string(count) + " available");
  std::map<SchemaId, int> taken;
  std::vector<ScenePair> out;
  for (const auto& p : train)
    if (taken[p.schema]++ < per) out.push_back(p);
  return out;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Context-aware object rearrangement: data generation, training and evaluation", "consor"};
  app.set_config("--config", "", "TOML file with option values; command-line flags take precedence");
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--seed", g.seed, "Seed for every random choice")->capture_default_str();
  app.add_option("--workers", g.workers, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--out", g.out, "Output directory (default runs/<command>)");
  app.add_option("--data-root", g.data_root, "Directory holding groupings/ and embeddings/");
  app.add_option("--embeddings", g.embeddings, "Embedding table (word2vec text)");

  GenerateFlags gen_f;
  auto* gen = app.add_subcommand("generate", "Generate a dataset");
  gen->add_option("--scenes-per-schema", gen_f.train, "Training goal scenes per schema")->capture_default_str();
  gen->add_option("--val-per-schema", gen_f.val, "Validation goal scenes per schema")->capture_default_str();
  gen->add_option("--test-per-schema", gen_f.test, "Seen-category test goal scenes per schema")->capture_default_str();
  gen->add_option("--unseen-per-schema", gen_f.unseen, "Unseen-category test goal scenes per schema")->capture_default_str();
  gen->add_option("--schemas", gen_f.schemas, "Subset of Class, Utility, Affordance, OOE");
  gen->add_option("--max-empty-containers", gen_f.max_empty, "Empty containers allowed in an initial state")
      ->capture_default_str();

  std::string train_data;
  EncoderFlags train_f;
  auto* tr = app.add_subcommand("train", "Train the scene encoder");
  tr->add_option("--data", train_data, "Dataset directory")->required();
  add_encoder_flags(tr, train_f);

  EvalFlags eval_f;
  auto* ev = app.add_subcommand("eval", "Score a model on a split");
  ev->add_option("--data", eval_f.data, "Dataset directory")->required();
  ev->add_option("--model", eval_f.model, "consor, cf, llm or oracle")
      ->required()
      ->check(CLI::IsMember({"consor", "cf", "llm", "oracle"}));
  ev->add_option("--checkpoint", eval_f.checkpoint, "Checkpoint directory (consor)");
  ev->add_option("--split", eval_f.split, "Split to score")->capture_default_str();
  ev->add_option("--report", eval_f.report, "markdown, structured or both")
      ->check(CLI::IsMember({"markdown", "structured", "both"}))
      ->capture_default_str();
  ev->add_option("--llm-client", eval_f.llm_client, "http, oracle or empty")
      ->check(CLI::IsMember({"http", "oracle", "empty"}))
      ->capture_default_str();
  ev->add_option("--llm-config", eval_f.llm_config, "JSON settings for the http completion client");

  SweepFlags sweep_f;
  EncoderFlags sweep_enc;
  auto* sw = app.add_subcommand("sweep", "Train and score at several training-set sizes");
  sw->add_option("--data", sweep_f.data, "Dataset directory")->required();
  sw->add_option("--sizes", sweep_f.sizes, "Total training goal scenes, split evenly over schemas")
      ->delimiter(',')
      ->capture_default_str();
  sw->add_option("--split", sweep_f.split, "Split to score")->capture_default_str();
  add_encoder_flags(sw, sweep_enc);

  ProjectFlags proj_f;
  auto* pr = app.add_subcommand("project", "Export one scene's latents with a 2-D projection");
  pr->add_option("--data", proj_f.data, "Dataset directory")->required();
  pr->add_option("--model", proj_f.model, "Checkpoint directory")->required();
  pr->add_option("--scene-id", proj_f.scene_id, "Scene to export")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  std::string stage = "start";
  std::string command = app.get_subcommands().front()->get_name();
  try {
    if (gen->parsed()) return cmd_generate(g, gen_f, out, stage);
    if (tr->parsed()) return cmd_train(g, train_data, train_f, out, stage);
    if (ev->parsed()) return cmd_eval(g, eval_f, out, stage);
    if (sw->parsed()) return cmd_sweep(g, sweep_f, sweep_enc, out, stage);
    return cmd_project(g, proj_f, out, stage);
  } catch (const UsageError& e) {
    err << "consor " << command << ": " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "consor " << command << ": " << stage << " failed: " << e.what() << "\n";
    return kRuntimeFailure;
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"consor"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace consor::cli
