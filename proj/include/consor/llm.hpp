#pragma once

// Few-shot text-completion baseline. Scenes are rendered as "Box k: ..." /
// "Table: ..." transcripts; the completion is parsed leniently and reconciled
// against the real object multiset so every prediction is a valid state.

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "consor/dataset.hpp"
#include "consor/metrics.hpp"

namespace consor {

/// "Box 1: bowl, cup\nBox 2: empty\nTable: pen\n". Boxes are 1-based;
/// underscores in category tokens render as spaces.
std::string render_scene(const SceneState& state);
/// Inverse of render_scene up to instance numbering. Throws Error(ParseError).
SceneState parse_transcript(std::string_view text);

struct PromptBundle {
  std::vector<std::string> demonstrations;  // rendered initial -> goal, no schema names
  std::string query;
  std::string rendered;
};

/// `demos` must hold exactly one pair per schema. Throws Error(MissingSchemaDemo).
PromptBundle build_prompt(std::span<const ScenePair> demos, const SceneState& query);

/// The first pair of each schema in `pool`, in a fixed schema order.
/// Throws Error(MissingSchemaDemo).
std::vector<ScenePair> pick_demonstrations(std::span<const ScenePair> pool);

struct ParsedArrangement {
  std::map<int, std::vector<std::pair<std::string, int>>> boxes;  // container -> (category, count)
  std::string remainder;                                           // text that matched nothing

  bool empty() const { return boxes.empty(); }
};

/// Total parser: "Box k: a, b" lines, category mentions matched to the
/// query's categories ignoring case, articles, leading counts and plurals.
ParsedArrangement parse_response(std::string_view text, const SceneState& query);

/// Applies a parsed arrangement to the surface objects. Mentions already
/// satisfied by prearranged objects are discounted; objects the response
/// does not place go to the lowest container with unused mentions, else 0.
SceneState reconcile(const SceneState& initial, const ParsedArrangement& parsed);

struct CompletionRequest {
  std::string scene_id;
  std::string prompt;
};

class CompletionClient {
 public:
  virtual ~CompletionClient() = default;
  /// Throws Error(TransportError) when no completion could be obtained.
  virtual std::string complete(const CompletionRequest& request) = 0;
};

/// Answers with the rendered true goal of the requested scene.
class OracleClient final : public CompletionClient {
 public:
  explicit OracleClient(std::span<const ScenePair> pairs);
  std::string complete(const CompletionRequest& request) override;

 private:
  std::map<std::string, std::string, std::less<>> goals_;
};

class EmptyClient final : public CompletionClient {
 public:
  std::string complete(const CompletionRequest&) override { return {}; }
};

/// Fixed transcripts by scene id, with an optional fallback for other scenes.
class CannedClient final : public CompletionClient {
 public:
  explicit CannedClient(std::map<std::string, std::string, std::less<>> by_scene, std::string fallback = {})
      : by_scene_(std::move(by_scene)), fallback_(std::move(fallback)) {}
  std::string complete(const CompletionRequest& request) override;

 private:
  std::map<std::string, std::string, std::less<>> by_scene_;
  std::string fallback_;
};

struct HttpClientConfig {
  std::string endpoint = "https://api.openai.com/v1/completions";
  std::string model = "gpt-3.5-turbo-instruct";
  int max_tokens = 256;
  double timeout_seconds = 30.0;
  int max_retries = 3;
  double backoff_seconds = 1.0;  // doubled after every failed attempt
  double max_requests_per_second = 1.0;
  std::string api_key_env = "CONSOR_LLM_API_KEY";
  std::filesystem::path audit_log;  // jsonl; empty disables logging

  ordered_json to_json() const;
  static HttpClientConfig from_json(const ordered_json& j);
};

/// POSTs {"model", "prompt", "max_tokens"} as JSON and reads choices[0].text
/// (or choices[0].message.content). Safe to share between threads.
class HttpCompletionClient final : public CompletionClient {
 public:
  explicit HttpCompletionClient(HttpClientConfig config);
  std::string complete(const CompletionRequest& request) override;

 private:
  void wait_for_slot();
  void audit(const ordered_json& entry);

  HttpClientConfig config_;
  std::string api_key_;
  std::mutex rate_mutex_;
  std::chrono::steady_clock::time_point next_slot_{};
  std::mutex log_mutex_;
};

/// Full pipeline for one scene. Throws Error(TransportError) naming the scene.
SceneState predict_llm(const SceneState& initial, std::span<const ScenePair> demos, CompletionClient& client,
                       const std::string& scene_id = {});

Predictor make_llm_predictor(std::vector<ScenePair> demos, std::shared_ptr<CompletionClient> client);

}  // namespace consor
