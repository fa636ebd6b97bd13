#include "consor/llm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

#include "consor/error.hpp"
#include "httplib.h"

namespace consor {

namespace {

std::string display_name(std::string_view category) {
  std::string s(category);
  std::replace(s.begin(), s.end(), '_', ' ');
  return s;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::string cur;
  for (char c : text) {
    if (c == '\n') {
      lines.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  if (!cur.empty()) lines.push_back(cur);
  return lines;
}

std::string join_items(const std::vector<ObjectInstance>& objs) {
  if (objs.empty()) return "empty";
  std::string out;
  for (const auto& o : objs) {
    if (!out.empty()) out += ", ";
    out += display_name(o.category);
  }
  return out;
}

const std::regex& box_line() {
  static const std::regex re(R"(^\s*[-*]*\s*box\s*#?\s*(\d+)\s*[:\-]\s*(.*)$)", std::regex::icase);
  return re;
}

const std::regex& table_line() {
  static const std::regex re(R"(^\s*[-*]*\s*table\s*:\s*(.*)$)", std::regex::icase);
  return re;
}

std::vector<std::string> split_items(const std::string& list) {
  std::string s = list;
  // " and " separates items as well as commas.
  for (std::size_t pos; (pos = lower(s).find(" and ")) != std::string::npos;) s.replace(pos, 5, ",");
  std::vector<std::string> items;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

bool is_empty_marker(const std::string& item) {
  const std::string s = lower(trim(item));
  return s == "empty" || s == "nothing" || s == "none" || s == "(empty)" || s == "-";
}

int number_word(const std::string& w) {
  static const std::map<std::string, int> words = {{"one", 1}, {"two", 2},   {"three", 3}, {"four", 4},
                                                   {"five", 5}, {"six", 6}, {"seven", 7},  {"eight", 8},
                                                   {"nine", 9}, {"ten", 10}};
  if (!w.empty() && std::all_of(w.begin(), w.end(), [](unsigned char c) { return std::isdigit(c); }))
    return std::atoi(w.c_str());
  if (!w.empty() && w.back() == 'x' && w.size() > 1 &&
      std::all_of(w.begin(), w.end() - 1, [](unsigned char c) { return std::isdigit(c); }))
    return std::atoi(w.c_str());
  auto it = words.find(w);
  return it == words.end() ? 0 : it->second;
}

/// (token, count) for one mention; token is lower-case with underscores.
std::pair<std::string, int> normalize_mention(const std::string& item) {
  std::string s = lower(item);
  for (char& c : s)
    if (c == '-' || c == '*' || c == '"' || c == '\'' || c == '`') c = ' ';
  while (!s.empty() && (s.back() == '.' || s.back() == ';' || std::isspace(static_cast<unsigned char>(s.back()))))
    s.pop_back();
  std::vector<std::string> words;
  std::stringstream in(s);
  for (std::string w; in >> w;) words.push_back(w);
  int count = 1;
  std::size_t start = 0;
  if (start < words.size() && number_word(words[start]) > 0) count = number_word(words[start++]);
  if (start < words.size() && (words[start] == "a" || words[start] == "an" || words[start] == "the"))
    ++start;
  std::string token;
  for (std::size_t i = start; i < words.size(); ++i) {
    if (!token.empty()) token += '_';
    token += words[i];
  }
  return {token, count};
}

std::string match_category(const std::string& token, const std::set<std::string>& vocab) {
  if (token.empty()) return {};
  std::vector<std::string> candidates{token};
  auto ends = [&](std::string_view suffix) {
    return token.size() > suffix.size() && token.compare(token.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  if (ends("ies")) candidates.push_back(token.substr(0, token.size() - 3) + "y");
  if (ends("es")) candidates.push_back(token.substr(0, token.size() - 2));
  if (ends("s")) candidates.push_back(token.substr(0, token.size() - 1));
  for (const auto& c : candidates)
    if (vocab.count(c)) return c;
  return {};
}

}  // namespace

std::string render_scene(const SceneState& state) {
  std::vector<std::vector<ObjectInstance>> boxes(static_cast<std::size_t>(state.n_containers()));
  std::vector<ObjectInstance> table;
  for (const auto& o : state.real_objects()) {
    if (o.receptacle.is_surface())
      table.push_back(o);
    else
      boxes.at(static_cast<std::size_t>(o.receptacle.index)).push_back(o);
  }
  std::string out;
  for (std::size_t k = 0; k < boxes.size(); ++k) out += "Box " + std::to_string(k + 1) + ": " + join_items(boxes[k]) + "\n";
  out += "Table: " + join_items(table) + "\n";
  return out;
}

SceneState parse_transcript(std::string_view text) {
  std::map<int, std::vector<std::string>> boxes;
  std::vector<std::string> table;
  bool saw_table = false;
  for (const auto& line : split_lines(text)) {
    if (trim(line).empty()) continue;
    std::smatch m;
    if (std::regex_match(line, m, box_line())) {
      const int k = std::stoi(m[1].str()) - 1;
      if (k < 0 || boxes.count(k)) throw Error(ErrorCode::ParseError, "bad or repeated box line: " + line);
      boxes[k] = split_items(m[2].str());
    } else if (std::regex_match(line, m, table_line())) {
      if (saw_table) throw Error(ErrorCode::ParseError, "repeated table line");
      saw_table = true;
      table = split_items(m[1].str());
    } else {
      throw Error(ErrorCode::ParseError, "unrecognised transcript line: " + line);
    }
  }
  const int n = static_cast<int>(boxes.size());
  if (n == 0 || boxes.rbegin()->first != n - 1) throw Error(ErrorCode::ParseError, "box lines are not numbered 1..N");
  std::map<std::string, int> next_index;
  std::vector<ObjectInstance> objs;
  auto add = [&](const std::vector<std::string>& items, ReceptacleId r) {
    for (const auto& item : items) {
      if (is_empty_marker(item)) continue;
      std::string token = lower(trim(item));
      std::replace(token.begin(), token.end(), ' ', '_');
      objs.push_back({token, r, next_index[token]++, false});
    }
  };
  for (const auto& [k, items] : boxes) add(items, ReceptacleId::container(k));
  add(table, ReceptacleId::surface());
  return SceneState::with_nulls(n, std::move(objs));
}

std::vector<ScenePair> pick_demonstrations(std::span<const ScenePair> pool) {
  std::vector<ScenePair> demos;
  for (SchemaId schema : kAllSchemas) {
    auto it = std::find_if(pool.begin(), pool.end(), [&](const ScenePair& p) { return p.schema == schema; });
    if (it == pool.end())
      throw Error(ErrorCode::MissingSchemaDemo, "no demonstration available for schema " + std::string(to_string(schema)));
    demos.push_back(*it);
  }
  return demos;
}

PromptBundle build_prompt(std::span<const ScenePair> demos, const SceneState& query) {
  std::vector<const ScenePair*> ordered;
  for (SchemaId schema : kAllSchemas) {
    const ScenePair* found = nullptr;
    for (const auto& d : demos) {
      if (d.schema != schema) continue;
      if (found)
        throw Error(ErrorCode::MissingSchemaDemo, "more than one demonstration for schema " + std::string(to_string(schema)));
      found = &d;
    }
    if (!found) throw Error(ErrorCode::MissingSchemaDemo, "no demonstration for schema " + std::string(to_string(schema)));
    ordered.push_back(found);
  }
  if (demos.size() != ordered.size()) throw Error(ErrorCode::MissingSchemaDemo, "expected exactly four demonstrations");

  PromptBundle bundle;
  std::string text =
      "Objects are sorted into boxes. In each example the boxes follow one consistent organizing rule, and "
      "the objects on the table still have to be put away.\n\n";
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    const std::string demo =
        "Before:\n" + render_scene(ordered[i]->initial) + "After:\n" + render_scene(ordered[i]->goal);
    bundle.demonstrations.push_back(demo);
    text += "Example " + std::to_string(i + 1) + "\n" + demo + "\n";
  }
  bundle.query = render_scene(query);
  text += "Now put away the table objects in this scene.\nBefore:\n" + bundle.query;
  text +=
      "Answer with one line per box in the form \"Box k: object, object\", listing every object in that box "
      "including those already there.\nAfter:\n";
  bundle.rendered = std::move(text);
  return bundle;
}

ParsedArrangement parse_response(std::string_view text, const SceneState& query) {
  ParsedArrangement parsed;
  std::set<std::string> vocab;
  for (const auto& [cat, _] : query.category_counts()) vocab.insert(cat);
  std::vector<std::string> leftover;
  for (const auto& line : split_lines(text)) {
    if (trim(line).empty()) continue;
    std::smatch m;
    if (!std::regex_match(line, m, box_line())) {
      leftover.push_back(line);
      continue;
    }
    int k = -1;
    try {
      k = std::stoi(m[1].str()) - 1;
    } catch (const std::exception&) {
    }
    if (k < 0 || k >= query.n_containers()) {
      leftover.push_back(line);
      continue;
    }
    for (const auto& item : split_items(m[2].str())) {
      if (is_empty_marker(item)) continue;
      const auto [token, count] = normalize_mention(item);
      const std::string category = match_category(token, vocab);
      if (category.empty()) {
        leftover.push_back(item);
        continue;
      }
      auto& entries = parsed.boxes[k];
      auto it = std::find_if(entries.begin(), entries.end(), [&](const auto& e) { return e.first == category; });
      if (it == entries.end())
        entries.emplace_back(category, count);
      else
        it->second += count;
    }
  }
  for (std::size_t i = 0; i < leftover.size(); ++i) parsed.remainder += (i ? "\n" : "") + leftover[i];
  return parsed;
}

SceneState reconcile(const SceneState& initial, const ParsedArrangement& parsed) {
  const int n = initial.n_containers();
  if (n < 1) throw Error(ErrorCode::NoContainers, "scene has no containers");
  std::vector<std::map<std::string, int>> need(static_cast<std::size_t>(n));
  for (const auto& [k, entries] : parsed.boxes) {
    if (k < 0 || k >= n) continue;
    for (const auto& [cat, count] : entries) need[static_cast<std::size_t>(k)][cat] += count;
  }
  for (const auto& obj : initial.real_objects()) {
    if (obj.receptacle.is_surface()) continue;
    auto& m = need[static_cast<std::size_t>(obj.receptacle.index)];
    auto it = m.find(obj.category);
    if (it != m.end() && it->second > 0) --it->second;
  }
  SceneState state = initial;
  for (const auto& obj : initial.surface_objects()) {
    int dest = -1;
    for (int c = 0; c < n && dest < 0; ++c) {
      auto& m = need[static_cast<std::size_t>(c)];
      auto it = m.find(obj.category);
      if (it != m.end() && it->second > 0) {
        --it->second;
        dest = c;
      }
    }
    for (int c = 0; c < n && dest < 0; ++c) {
      for (auto& [cat, left] : need[static_cast<std::size_t>(c)]) {
        if (left > 0) {
          --left;
          dest = c;
          break;
        }
      }
    }
    if (dest < 0) dest = 0;
    state = move_object(state, obj.category, obj.instance_index, ReceptacleId::container(dest));
  }
  return state;
}

OracleClient::OracleClient(std::span<const ScenePair> pairs) {
  for (const auto& p : pairs) goals_[p.scene_id] = render_scene(p.goal);
}

std::string OracleClient::complete(const CompletionRequest& request) {
  auto it = goals_.find(request.scene_id);
  if (it == goals_.end()) throw Error(ErrorCode::TransportError, "oracle has no goal for scene " + request.scene_id);
  return it->second;
}

std::string CannedClient::complete(const CompletionRequest& request) {
  auto it = by_scene_.find(request.scene_id);
  return it == by_scene_.end() ? fallback_ : it->second;
}

// ---- HTTP client ----------------------------------------------------------

ordered_json HttpClientConfig::to_json() const {
  ordered_json j;
  j["endpoint"] = endpoint;
  j["model"] = model;
  j["max_tokens"] = max_tokens;
  j["timeout_seconds"] = timeout_seconds;
  j["max_retries"] = max_retries;
  j["backoff_seconds"] = backoff_seconds;
  j["max_requests_per_second"] = max_requests_per_second;
  j["api_key_env"] = api_key_env;
  j["audit_log"] = audit_log.string();
  return j;
}

HttpClientConfig HttpClientConfig::from_json(const ordered_json& j) {
  HttpClientConfig c;
  try {
    c.endpoint = j.value("endpoint", c.endpoint);
    c.model = j.value("model", c.model);
    c.max_tokens = j.value("max_tokens", c.max_tokens);
    c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
    c.max_retries = j.value("max_retries", c.max_retries);
    c.backoff_seconds = j.value("backoff_seconds", c.backoff_seconds);
    c.max_requests_per_second = j.value("max_requests_per_second", c.max_requests_per_second);
    c.api_key_env = j.value("api_key_env", c.api_key_env);
    c.audit_log = j.value("audit_log", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, e.what());
  }
  return c;
}

namespace {

struct Endpoint {
  std::string base;  // scheme://host[:port]
  std::string path;
};

Endpoint split_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(ErrorCode::InvalidConfig, "endpoint needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string extract_completion(const std::string& body) {
  const auto j = nlohmann::json::parse(body);
  const auto& choice = j.at("choices").at(0);
  if (choice.contains("text")) return choice.at("text").get<std::string>();
  return choice.at("message").at("content").get<std::string>();
}

}  // namespace

HttpCompletionClient::HttpCompletionClient(HttpClientConfig config) : config_(std::move(config)) {
  split_endpoint(config_.endpoint);
  if (const char* key = std::getenv(config_.api_key_env.c_str())) api_key_ = key;
}

void HttpCompletionClient::wait_for_slot() {
  if (config_.max_requests_per_second <= 0) return;
  const auto interval = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
      std::chrono::duration<double>(1.0 / config_.max_requests_per_second));
  std::chrono::steady_clock::time_point slot;
  {
    std::lock_guard lock(rate_mutex_);
    slot = std::max(std::chrono::steady_clock::now(), next_slot_);
    next_slot_ = slot + interval;
  }
  std::this_thread::sleep_until(slot);
}

void HttpCompletionClient::audit(const ordered_json& entry) {
  if (config_.audit_log.empty()) return;
  std::lock_guard lock(log_mutex_);
  if (config_.audit_log.has_parent_path()) std::filesystem::create_directories(config_.audit_log.parent_path());
  std::ofstream out(config_.audit_log, std::ios::app);
  out << entry.dump() << "\n";
}

std::string HttpCompletionClient::complete(const CompletionRequest& request) {
  const Endpoint ep = split_endpoint(config_.endpoint);
  ordered_json body;
  body["model"] = config_.model;
  body["prompt"] = request.prompt;
  body["max_tokens"] = config_.max_tokens;
  const std::string payload = body.dump();

  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  const auto timeout = std::chrono::duration_cast<std::chrono::milliseconds>(
      std::chrono::duration<double>(config_.timeout_seconds));
  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    wait_for_slot();
    httplib::Client client(ep.base);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);

    ordered_json entry;
    entry["time"] = utc_timestamp();
    entry["scene_id"] = request.scene_id;
    entry["attempt"] = attempt + 1;
    entry["endpoint"] = config_.endpoint;
    entry["request"] = body;

    bool retryable = true;
    auto res = client.Post(ep.path, headers, payload, "application/json");
    if (!res) {
      last_error = "request failed: " + httplib::to_string(res.error());
    } else {
      entry["status"] = res->status;
      entry["response"] = res->body;
      if (res->status == 200) {
        try {
          std::string text = extract_completion(res->body);
          audit(entry);
          return text;
        } catch (const nlohmann::json::exception& e) {
          last_error = std::string("unreadable completion body: ") + e.what();
          retryable = false;
        }
      } else {
        last_error = "HTTP status " + std::to_string(res->status);
        retryable = res->status == 429 || res->status >= 500;
      }
    }
    entry["error"] = last_error;
    audit(entry);
    if (!retryable) break;
    if (attempt < config_.max_retries) {
      const double delay = config_.backoff_seconds * std::pow(2.0, attempt);
      std::this_thread::sleep_for(std::chrono::duration<double>(delay));
    }
  }
  throw Error(ErrorCode::TransportError, "scene " + request.scene_id + ": " + last_error);
}

// ---- pipeline -------------------------------------------------------------

SceneState predict_llm(const SceneState& initial, std::span<const ScenePair> demos, CompletionClient& client,
                       const std::string& scene_id) {
  const PromptBundle prompt = build_prompt(demos, initial);
  std::string text;
  try {
    text = client.complete({scene_id, prompt.rendered});
  } catch (const Error& e) {
    if (e.code() != ErrorCode::TransportError) throw;
    const std::string what = e.what();
    if (scene_id.empty() || what.find(scene_id) != std::string::npos) throw;
    throw Error(ErrorCode::TransportError, "scene " + scene_id + ": " + what);
  }
  return reconcile(initial, parse_response(text, initial));
}

Predictor make_llm_predictor(std::vector<ScenePair> demos, std::shared_ptr<CompletionClient> client) {
  auto shared = std::make_shared<const std::vector<ScenePair>>(std::move(demos));
  return [shared, client](const ScenePair& pair) { return predict_llm(pair.initial, *shared, *client, pair.scene_id); };
}

}  // namespace consor
