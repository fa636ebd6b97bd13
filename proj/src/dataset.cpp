#include "consor/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <exception>
#include <iomanip>
#include <mutex>
#include <set>
#include <sstream>

#include "consor/digest.hpp"
#include "consor/error.hpp"
#include "consor/rng.hpp"

#ifndef CONSOR_DATA_DIR
#define CONSOR_DATA_DIR "data"
#endif

namespace consor {

std::string_view to_string(SchemaId schema) {
  switch (schema) {
    case SchemaId::Class: return "Class";
    case SchemaId::Utility: return "Utility";
    case SchemaId::Affordance: return "Affordance";
    case SchemaId::OOE: return "OOE";
  }
  return "?";
}

SchemaId parse_schema(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "class") return SchemaId::Class;
  if (lower == "utility") return SchemaId::Utility;
  if (lower == "affordance") return SchemaId::Affordance;
  if (lower == "ooe") return SchemaId::OOE;
  throw Error(ErrorCode::ParseError, "unknown schema '" + std::string(text) + "'");
}

const std::vector<std::string>& seen_categories() {
  static const std::vector<std::string> kSeen = {
      "aluminum_foil", "basketball", "book",       "bottle",         "bowl",        "bread",    "candle",
      "cloth",         "cup",        "dish_sponge", "dumbbell",      "egg",         "hand_towel", "kettle",
      "laptop",        "lettuce",    "newspaper",  "pen",            "plate",       "pot",      "potato",
      "scrub_brush",   "soap_dispenser", "spoon",  "toilet_paper",   "tomato",      "towel",    "wine_bottle"};
  return kSeen;
}

const std::vector<std::string>& unseen_categories() {
  static const std::vector<std::string> kUnseen = {"apple", "box",    "ladle",        "mug",  "pan",
                                                   "paper_towel_roll", "pencil", "spray_bottle", "vase", "watering_can"};
  return kUnseen;
}

// ---- grouping tables -----------------------------------------------------

GroupingTable::GroupingTable(SchemaId schema, std::map<std::string, std::string> groups)
    : schema_(schema), groups_(std::move(groups)) {}

GroupingTable GroupingTable::parse(SchemaId schema, std::string_view text) {
  std::map<std::string, std::string> groups;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size())
      throw Error(ErrorCode::ParseError, "grouping line " + std::to_string(lineno) + ": expected category<TAB>group");
    std::string category = line.substr(0, tab);
    if (!groups.emplace(category, line.substr(tab + 1)).second)
      throw Error(ErrorCode::DuplicateToken, "grouping line " + std::to_string(lineno) + ": '" + category + "' repeated");
  }
  return GroupingTable(schema, std::move(groups));
}

GroupingTable GroupingTable::load(SchemaId schema, const std::filesystem::path& path) {
  return parse(schema, read_file(path));
}

bool GroupingTable::contains(std::string_view category) const {
  return groups_.find(std::string(category)) != groups_.end();
}

const std::string& GroupingTable::group_of(std::string_view category) const {
  auto it = groups_.find(std::string(category));
  if (it == groups_.end())
    throw Error(ErrorCode::UnknownCategory, "'" + std::string(category) + "' has no " +
                                                std::string(to_string(schema_)) + " group");
  return it->second;
}

const GroupingTable* GroupingTables::for_schema(SchemaId schema) const {
  switch (schema) {
    case SchemaId::Class: return &class_table;
    case SchemaId::Utility: return &utility_table;
    case SchemaId::Affordance: return &affordance_table;
    case SchemaId::OOE: return nullptr;
  }
  return nullptr;
}

GroupingTables GroupingTables::load(const std::filesystem::path& dir) {
  return {GroupingTable::load(SchemaId::Class, dir / "class.tsv"),
          GroupingTable::load(SchemaId::Utility, dir / "utility.tsv"),
          GroupingTable::load(SchemaId::Affordance, dir / "affordance.tsv")};
}

std::filesystem::path default_data_dir() { return CONSOR_DATA_DIR; }

// ---- config --------------------------------------------------------------

void GenerationConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); };
  if (train_per_schema < 0 || val_per_schema < 0 || test_per_schema < 0 || test_unseen_per_schema < 0)
    fail("scene counts must be non-negative");
  if (train_per_schema + val_per_schema + test_per_schema + test_unseen_per_schema == 0)
    fail("at least one scene must be requested");
  if (seen.empty()) fail("seen vocabulary is empty");
  if (schemas.empty()) fail("no schemas requested");
  if (std::set<SchemaId>(schemas.begin(), schemas.end()).size() != schemas.size()) fail("schemas listed twice");
  if (objects_per_scene.lo < 1 || objects_per_scene.lo > objects_per_scene.hi) fail("bad objects_per_scene range");
  if (containers_per_scene.lo < 1 || containers_per_scene.lo > containers_per_scene.hi)
    fail("bad containers_per_scene range");
  if (duplicates_per_category.lo < 1 || duplicates_per_category.lo > duplicates_per_category.hi)
    fail("bad duplicates_per_category range");
  if (!(removal_fraction.lo > 0.0) || removal_fraction.hi > 1.0 || removal_fraction.lo > removal_fraction.hi)
    fail("removal_fraction must be a range inside (0,1]");
  if (max_empty_containers < 0) fail("max_empty_containers must be >= 0");
  if (max_attempts < 1) fail("max_attempts must be positive");
  if (test_unseen_per_schema > 0 && unseen.empty()) fail("unseen vocabulary is empty");
  std::set<std::string> seen_set(seen.begin(), seen.end());
  for (const auto& u : unseen)
    if (seen_set.count(u)) fail("category '" + u + "' is both seen and unseen");
}

ordered_json GenerationConfig::to_json() const {
  ordered_json j;
  j["seed"] = seed;
  j["train_per_schema"] = train_per_schema;
  j["val_per_schema"] = val_per_schema;
  j["test_per_schema"] = test_per_schema;
  j["test_unseen_per_schema"] = test_unseen_per_schema;
  j["schemas"] = ordered_json::array();
  for (SchemaId s : schemas) j["schemas"].push_back(std::string(to_string(s)));
  j["seen"] = seen;
  j["unseen"] = unseen;
  j["objects_per_scene"] = {objects_per_scene.lo, objects_per_scene.hi};
  j["containers_per_scene"] = {containers_per_scene.lo, containers_per_scene.hi};
  j["duplicates_per_category"] = {duplicates_per_category.lo, duplicates_per_category.hi};
  j["removal_fraction"] = {removal_fraction.lo, removal_fraction.hi};
  j["max_empty_containers"] = max_empty_containers;
  j["max_attempts"] = max_attempts;
  return j;
}

GenerationConfig GenerationConfig::from_json(const ordered_json& j) {
  GenerationConfig c;
  try {
    auto int_range = [&](const char* key, IntRange& r) {
      if (j.contains(key)) r = {j[key].at(0).get<int>(), j[key].at(1).get<int>()};
    };
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("train_per_schema")) c.train_per_schema = j["train_per_schema"].get<int>();
    if (j.contains("val_per_schema")) c.val_per_schema = j["val_per_schema"].get<int>();
    if (j.contains("test_per_schema")) c.test_per_schema = j["test_per_schema"].get<int>();
    if (j.contains("test_unseen_per_schema")) c.test_unseen_per_schema = j["test_unseen_per_schema"].get<int>();
    if (j.contains("schemas")) {
      c.schemas.clear();
      for (const auto& s : j["schemas"]) c.schemas.push_back(parse_schema(s.get<std::string>()));
    }
    if (j.contains("seen")) c.seen = j["seen"].get<std::vector<std::string>>();
    if (j.contains("unseen")) c.unseen = j["unseen"].get<std::vector<std::string>>();
    int_range("objects_per_scene", c.objects_per_scene);
    int_range("containers_per_scene", c.containers_per_scene);
    int_range("duplicates_per_category", c.duplicates_per_category);
    if (j.contains("removal_fraction"))
      c.removal_fraction = {j["removal_fraction"].at(0).get<double>(), j["removal_fraction"].at(1).get<double>()};
    if (j.contains("max_empty_containers")) c.max_empty_containers = j["max_empty_containers"].get<int>();
    if (j.contains("max_attempts")) c.max_attempts = j["max_attempts"].get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, e.what());
  }
  return c;
}

// ---- generation ----------------------------------------------------------

namespace {

struct CategoryCount {
  std::string category;
  int count;
  bool mandatory;
};

SceneState generate_grouped(const GroupingTable& table, Rng& rng, const GenerationConfig& config,
                            const std::vector<std::string>& vocabulary) {
  std::map<std::string, std::vector<std::string>> by_group;
  for (const auto& category : vocabulary) by_group[table.group_of(category)].push_back(category);

  std::vector<std::string> labels;
  for (const auto& [label, members] : by_group) labels.push_back(label);
  if (static_cast<int>(labels.size()) < config.containers_per_scene.lo)
    throw Error(ErrorCode::VocabularyTooSmall, "vocabulary spans " + std::to_string(labels.size()) +
                                                   " groups; scenes need at least " +
                                                   std::to_string(config.containers_per_scene.lo));

  const int k = uniform_int(rng, config.containers_per_scene.lo,
                            std::min<int>(config.containers_per_scene.hi, static_cast<int>(labels.size())));
  std::shuffle(labels.begin(), labels.end(), rng);
  labels.resize(static_cast<std::size_t>(k));

  const int target = uniform_int(rng, std::max(config.objects_per_scene.lo, k), std::max(config.objects_per_scene.hi, k));
  auto draw_dups = [&] {
    return uniform_int(rng, config.duplicates_per_category.lo, config.duplicates_per_category.hi);
  };

  std::vector<CategoryCount> picked;
  std::vector<std::string> pool;
  for (const auto& label : labels) {
    auto members = by_group[label];
    std::shuffle(members.begin(), members.end(), rng);
    picked.push_back({members.front(), draw_dups(), true});
    pool.insert(pool.end(), members.begin() + 1, members.end());
  }
  std::shuffle(pool.begin(), pool.end(), rng);

  auto total = [&] {
    int t = 0;
    for (const auto& p : picked) t += p.count;
    return t;
  };
  std::size_t next = 0;
  while (total() < target && next < pool.size()) picked.push_back({pool[next++], draw_dups(), false});
  while (total() > target) {
    std::vector<std::size_t> reducible;
    for (std::size_t i = 0; i < picked.size(); ++i)
      if (picked[i].count > 1) reducible.push_back(i);
    if (!reducible.empty()) {
      --picked[reducible[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(reducible.size()) - 1))]].count;
      continue;
    }
    auto it = std::find_if(picked.rbegin(), picked.rend(), [](const CategoryCount& p) { return !p.mandatory; });
    if (it == picked.rend()) break;
    picked.erase(std::next(it).base());
  }

  std::map<std::string, int> container_of_group;
  for (int c = 0; c < k; ++c) container_of_group[labels[static_cast<std::size_t>(c)]] = c;

  std::vector<ObjectInstance> objects;
  for (const auto& p : picked) {
    const int c = container_of_group.at(table.group_of(p.category));
    for (int i = 0; i < p.count; ++i) objects.push_back({p.category, ReceptacleId::container(c), i, false});
  }
  return SceneState::with_nulls(k, std::move(objects));
}

SceneState generate_ooe(Rng& rng, const GenerationConfig& config, const std::vector<std::string>& vocabulary) {
  const int k = uniform_int(rng, config.containers_per_scene.lo, config.containers_per_scene.hi);
  const int m_lo = std::max(1, (config.objects_per_scene.lo + k - 1) / k);
  const int m_hi = std::min(static_cast<int>(vocabulary.size()), config.objects_per_scene.hi / k);
  if (m_lo > m_hi)
    throw Error(ErrorCode::VocabularyTooSmall, "one-of-everything scene with " + std::to_string(k) +
                                                   " containers cannot fit the object budget");
  const int m = uniform_int(rng, m_lo, m_hi);
  std::vector<std::string> categories = vocabulary;
  std::shuffle(categories.begin(), categories.end(), rng);
  categories.resize(static_cast<std::size_t>(m));

  std::vector<ObjectInstance> objects;
  std::vector<int> slots(static_cast<std::size_t>(k));
  for (const auto& category : categories) {
    for (int c = 0; c < k; ++c) slots[static_cast<std::size_t>(c)] = c;
    std::shuffle(slots.begin(), slots.end(), rng);
    for (int i = 0; i < k; ++i)
      objects.push_back({category, ReceptacleId::container(slots[static_cast<std::size_t>(i)]), i, false});
  }
  return SceneState::with_nulls(k, std::move(objects));
}

}  // namespace

SceneState generate_goal_scene(SchemaId schema, std::uint64_t seed, const GenerationConfig& config,
                               const std::vector<std::string>& vocabulary, const GroupingTables& tables) {
  if (vocabulary.empty()) throw Error(ErrorCode::VocabularyTooSmall, "empty vocabulary");
  Rng rng(seed);
  if (schema == SchemaId::OOE) return generate_ooe(rng, config, vocabulary);
  return generate_grouped(*tables.for_schema(schema), rng, config, vocabulary);
}

SceneState derive_initial_state(const SceneState& goal, int removal_count, std::uint64_t seed) {
  auto candidates = goal.real_objects();
  std::erase_if(candidates, [](const ObjectInstance& o) { return o.receptacle.is_surface(); });
  if (removal_count < 1 || removal_count > static_cast<int>(candidates.size()))
    throw Error(ErrorCode::RemovalCountOutOfRange, std::to_string(removal_count) + " not in [1," +
                                                       std::to_string(candidates.size()) + "]");
  Rng rng(seed);
  SceneState state = goal;
  for (int r = 0; r < removal_count; ++r) {
    const auto pick = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(candidates.size()) - 1));
    state = move_object(state, candidates[pick].category, candidates[pick].instance_index, ReceptacleId::surface());
    candidates.erase(candidates.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  return state;
}

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

struct SplitSpec {
  std::string_view name;
  int per_schema;
  bool unseen;
};

ScenePair generate_pair(const GenerationConfig& config, const GroupingTables& tables, const SplitSpec& split,
                        SchemaId schema, int ordinal, const std::vector<std::string>& vocabulary,
                        const std::set<std::string>& unseen_set) {
  for (int attempt = 0; attempt < config.max_attempts; ++attempt) {
    const std::uint64_t base = derive_seed(config.seed, split.name,
                                           {static_cast<std::uint64_t>(schema), static_cast<std::uint64_t>(ordinal),
                                            static_cast<std::uint64_t>(attempt)});
    SceneState goal = generate_goal_scene(schema, derive_seed(base, "goal"), config, vocabulary, tables);
    if (split.unseen) {
      const auto counts = goal.category_counts();
      const bool has_unseen = std::any_of(counts.begin(), counts.end(),
                                          [&](const auto& kv) { return unseen_set.count(kv.first) > 0; });
      if (!has_unseen) continue;
    }
    Rng rng(derive_seed(base, "removal"));
    const int n = goal.count_real();
    const double fraction = uniform_real(rng, config.removal_fraction.lo, config.removal_fraction.hi);
    const int removal = std::clamp(static_cast<int>(std::lround(fraction * n)), 1, n);
    SceneState initial = derive_initial_state(goal, removal, derive_seed(base, "derive"));
    const int empty = initial.count_empty_containers();
    if (empty == initial.n_containers() || empty > config.max_empty_containers) continue;

    std::ostringstream id;
    id << split.name << '-' << lower(to_string(schema)) << '-' << std::setw(5) << std::setfill('0') << ordinal;
    return {id.str(), schema, std::move(initial), std::move(goal)};
  }
  throw Error(ErrorCode::InvalidConfig, std::string(split.name) + "/" + std::string(to_string(schema)) + " scene " +
                                            std::to_string(ordinal) + ": no valid scene after " +
                                            std::to_string(config.max_attempts) + " attempts");
}

}  // namespace

Dataset generate_dataset(const GenerationConfig& config, const GroupingTables& tables) {
  config.validate();
  std::vector<std::string> mixed = config.seen;
  mixed.insert(mixed.end(), config.unseen.begin(), config.unseen.end());
  const std::set<std::string> unseen_set(config.unseen.begin(), config.unseen.end());

  const std::array<SplitSpec, 4> specs = {SplitSpec{"train", config.train_per_schema, false},
                                          SplitSpec{"val", config.val_per_schema, false},
                                          SplitSpec{"test_seen", config.test_per_schema, false},
                                          SplitSpec{"test_unseen", config.test_unseen_per_schema, true}};
  Dataset data;
  for (const auto& spec : specs) {
    auto& out = split_by_name(data, spec.name);
    const int per_schema = spec.per_schema;
    const int total = per_schema * static_cast<int>(config.schemas.size());
    out.resize(static_cast<std::size_t>(total));
    const auto& vocabulary = spec.unseen ? mixed : config.seen;

    std::exception_ptr failure;
    std::mutex failure_mutex;
#pragma omp parallel for schedule(dynamic, 16) num_threads(std::max(1, config.workers))
    for (int job = 0; job < total; ++job) {
      try {
        const SchemaId schema = config.schemas[static_cast<std::size_t>(job / per_schema)];
        out[static_cast<std::size_t>(job)] =
            generate_pair(config, tables, spec, schema, job % per_schema, vocabulary, unseen_set);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);
  }
  return data;
}

bool verify_schema_consistency(const SceneState& goal, SchemaId schema, const GroupingTables& tables) {
  if (goal.count_on_surface() != 0) return false;
  const int k = goal.n_containers();
  if (schema == SchemaId::OOE) {
    std::map<std::string, std::vector<int>> per_container;
    for (const auto& o : goal.real_objects()) {
      auto& counts = per_container[o.category];
      counts.resize(static_cast<std::size_t>(k), 0);
      ++counts[static_cast<std::size_t>(o.receptacle.index)];
    }
    for (const auto& [category, counts] : per_container)
      for (int c : counts)
        if (c != 1) return false;
    return true;
  }

  const GroupingTable& table = *tables.for_schema(schema);
  std::vector<std::set<std::string>> labels(static_cast<std::size_t>(k));
  for (const auto& o : goal.real_objects()) {
    if (!table.contains(o.category)) return false;
    labels[static_cast<std::size_t>(o.receptacle.index)].insert(table.group_of(o.category));
  }
  std::set<std::string> used;
  for (const auto& l : labels) {
    if (l.size() != 1) return false;
    if (!used.insert(*l.begin()).second) return false;
  }
  return true;
}

// ---- serialization -------------------------------------------------------

ordered_json pair_to_json(const ScenePair& pair) {
  ordered_json rec;
  rec["scene_id"] = pair.scene_id;
  rec["schema"] = std::string(to_string(pair.schema));
  rec["n_containers"] = pair.goal.n_containers();
  rec["initial"] = objects_to_json(pair.initial);
  rec["goal"] = objects_to_json(pair.goal);
  return rec;
}

ScenePair pair_from_json(const ordered_json& record) {
  try {
    ScenePair p;
    p.scene_id = record.at("scene_id").get<std::string>();
    p.schema = parse_schema(record.at("schema").get<std::string>());
    const int n = record.at("n_containers").get<int>();
    p.initial = objects_from_json(n, record.at("initial"));
    p.goal = objects_from_json(n, record.at("goal"));
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
}

std::string serialize_split(const std::vector<ScenePair>& split) {
  std::string out;
  for (const auto& p : split) {
    out += pair_to_json(p).dump();
    out += '\n';
  }
  return out;
}

std::vector<ScenePair> parse_split(std::string_view text) {
  std::vector<ScenePair> out;
  std::size_t pos = 0;
  int lineno = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    pos = end + 1;
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(pair_from_json(ordered_json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<ScenePair>& split_by_name(Dataset& data, std::string_view name) {
  if (name == "train") return data.train;
  if (name == "val") return data.val;
  if (name == "test_seen") return data.test_seen;
  if (name == "test_unseen") return data.test_unseen;
  throw Error(ErrorCode::InvalidConfig, "unknown split '" + std::string(name) + "'");
}

const std::vector<ScenePair>& split_by_name(const Dataset& data, std::string_view name) {
  return split_by_name(const_cast<Dataset&>(data), name);
}

DatasetManifest write_dataset(const std::filesystem::path& dir, const Dataset& data, const GenerationConfig& config) {
  std::filesystem::create_directories(dir);
  DatasetManifest manifest;
  manifest.config = config;
  std::string joined;
  for (auto name : kSplitNames) {
    const auto& split = split_by_name(data, name);
    const std::string text = serialize_split(split);
    const std::string file = std::string(name) + ".jsonl";
    write_file(dir / file, text);
    manifest.file_digests[file] = sha256_hex(text);
    manifest.counts[std::string(name)] = static_cast<int>(split.size());
    joined += manifest.file_digests[file];
  }
  manifest.digest = sha256_hex(joined);

  ordered_json j;
  j["config"] = config.to_json();
  j["digest"] = manifest.digest;
  j["files"] = manifest.file_digests;
  j["counts"] = manifest.counts;
  write_file(dir / "manifest.json", j.dump(2) + "\n");
  return manifest;
}

DatasetManifest load_manifest(const std::filesystem::path& dir) {
  ordered_json j;
  try {
    j = ordered_json::parse(read_file(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, "manifest.json: " + std::string(e.what()));
  }
  DatasetManifest m;
  m.config = GenerationConfig::from_json(j.at("config"));
  m.digest = j.at("digest").get<std::string>();
  m.file_digests = j.at("files").get<std::map<std::string, std::string>>();
  m.counts = j.at("counts").get<std::map<std::string, int>>();
  return m;
}

Dataset load_dataset(const std::filesystem::path& dir, DatasetManifest* manifest) {
  DatasetManifest m = load_manifest(dir);
  Dataset data;
  std::string joined;
  for (auto name : kSplitNames) {
    const std::string file = std::string(name) + ".jsonl";
    const std::string text = read_file(dir / file);
    const std::string digest = sha256_hex(text);
    auto it = m.file_digests.find(file);
    if (it == m.file_digests.end() || it->second != digest)
      throw Error(ErrorCode::ArtifactMismatch, file + " does not match the dataset manifest digest");
    joined += digest;
    split_by_name(data, name) = parse_split(text);
  }
  if (sha256_hex(joined) != m.digest) throw Error(ErrorCode::ArtifactMismatch, "dataset digest mismatch");
  if (manifest) *manifest = std::move(m);
  return data;
}

}  // namespace consor
