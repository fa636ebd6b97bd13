#pragma once

// Procedural goal scenes under the four organizational schemas and the
// partially arranged initial states derived from them.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "consor/scene.hpp"
#include "consor/scene_io.hpp"

namespace consor {

enum class SchemaId { Class, Utility, Affordance, OOE };

inline constexpr std::array<SchemaId, 4> kAllSchemas = {SchemaId::Class, SchemaId::Utility,
                                                        SchemaId::Affordance, SchemaId::OOE};

std::string_view to_string(SchemaId schema);
/// Accepts the canonical names ("Class", "Utility", "Affordance", "OOE"), case-insensitive.
SchemaId parse_schema(std::string_view text);

/// The object vocabulary: 28 training categories and 10 held-out ones.
const std::vector<std::string>& seen_categories();
const std::vector<std::string>& unseen_categories();

/// category -> group label for one semantic schema. OOE has no table.
class GroupingTable {
 public:
  GroupingTable() = default;
  GroupingTable(SchemaId schema, std::map<std::string, std::string> groups);

  /// Lines "category<TAB>group"; blank lines and '#' comments are skipped.
  static GroupingTable parse(SchemaId schema, std::string_view text);
  static GroupingTable load(SchemaId schema, const std::filesystem::path& path);

  SchemaId schema() const { return schema_; }
  const std::map<std::string, std::string>& groups() const { return groups_; }
  bool contains(std::string_view category) const;
  /// Throws Error(UnknownCategory).
  const std::string& group_of(std::string_view category) const;

 private:
  SchemaId schema_ = SchemaId::Class;
  std::map<std::string, std::string> groups_;
};

struct GroupingTables {
  GroupingTable class_table;
  GroupingTable utility_table;
  GroupingTable affordance_table;

  /// nullptr for OOE.
  const GroupingTable* for_schema(SchemaId schema) const;
  /// Loads class.tsv, utility.tsv and affordance.tsv from a directory.
  static GroupingTables load(const std::filesystem::path& dir);
};

/// Path of the shipped data directory (grouping tables, embeddings).
std::filesystem::path default_data_dir();

struct IntRange {
  int lo = 0;
  int hi = 0;
};

struct RealRange {
  double lo = 0.0;
  double hi = 0.0;
};

struct GenerationConfig {
  std::uint64_t seed = 17;
  int train_per_schema = 1980;
  int val_per_schema = 110;
  int test_per_schema = 110;
  int test_unseen_per_schema = 30;
  /// Schemas to generate; per-scene seeds do not depend on this list.
  std::vector<SchemaId> schemas{kAllSchemas.begin(), kAllSchemas.end()};
  std::vector<std::string> seen = seen_categories();
  std::vector<std::string> unseen = unseen_categories();
  IntRange objects_per_scene{6, 14};
  IntRange containers_per_scene{2, 4};
  IntRange duplicates_per_category{1, 3};
  RealRange removal_fraction{0.2, 0.8};
  /// Initial states may leave at most this many containers without objects.
  int max_empty_containers = 1;
  int max_attempts = 256;
  /// Worker threads for generation; output does not depend on it.
  int workers = 1;

  /// Throws Error(InvalidConfig).
  void validate() const;
  ordered_json to_json() const;
  static GenerationConfig from_json(const ordered_json& j);
};

struct ScenePair {
  std::string scene_id;
  SchemaId schema = SchemaId::Class;
  SceneState initial;
  SceneState goal;
};

struct Dataset {
  std::vector<ScenePair> train;
  std::vector<ScenePair> val;
  std::vector<ScenePair> test_seen;
  std::vector<ScenePair> test_unseen;
};

inline constexpr std::array<std::string_view, 4> kSplitNames = {"train", "val", "test_seen", "test_unseen"};

SceneState generate_goal_scene(SchemaId schema, std::uint64_t seed, const GenerationConfig& config,
                               const std::vector<std::string>& vocabulary, const GroupingTables& tables);

/// Moves `removal_count` random objects from containers onto the surface.
/// Throws Error(RemovalCountOutOfRange).
SceneState derive_initial_state(const SceneState& goal, int removal_count, std::uint64_t seed);

Dataset generate_dataset(const GenerationConfig& config, const GroupingTables& tables);

bool verify_schema_consistency(const SceneState& goal, SchemaId schema, const GroupingTables& tables);

// ---- serialization -------------------------------------------------------

ordered_json pair_to_json(const ScenePair& pair);
ScenePair pair_from_json(const ordered_json& record);

std::string serialize_split(const std::vector<ScenePair>& split);
std::vector<ScenePair> parse_split(std::string_view text);

struct DatasetManifest {
  GenerationConfig config;
  std::string digest;
  std::map<std::string, std::string> file_digests;
  std::map<std::string, int> counts;
};

/// Writes the four split files plus manifest.json; returns the manifest.
DatasetManifest write_dataset(const std::filesystem::path& dir, const Dataset& data, const GenerationConfig& config);
Dataset load_dataset(const std::filesystem::path& dir, DatasetManifest* manifest = nullptr);
DatasetManifest load_manifest(const std::filesystem::path& dir);
std::vector<ScenePair>& split_by_name(Dataset& data, std::string_view name);
const std::vector<ScenePair>& split_by_name(const Dataset& data, std::string_view name);

}  // namespace consor
