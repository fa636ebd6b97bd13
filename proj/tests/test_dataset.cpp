#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <set>

#include "consor/digest.hpp"
#include "consor/error.hpp"
#include "consor/dataset.hpp"

using namespace consor;
namespace fs = std::filesystem;

namespace {

const GroupingTables& tables() {
  static const GroupingTables t = GroupingTables::load(default_data_dir() / "groupings");
  return t;
}

ObjectInstance obj(std::string cat, int container, int i = 0) {
  return {std::move(cat), ReceptacleId::container(container), i, false};
}

GenerationConfig small_config() {
  GenerationConfig c;
  c.train_per_schema = 25;
  c.val_per_schema = 5;
  c.test_per_schema = 5;
  c.test_unseen_per_schema = 5;
  return c;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::IoError;
}

}  // namespace

TEST_CASE("grouping tables cover the vocabulary once") {
  std::set<std::string> vocab(seen_categories().begin(), seen_categories().end());
  vocab.insert(unseen_categories().begin(), unseen_categories().end());
  CHECK(seen_categories().size() == 28);
  CHECK(unseen_categories().size() == 10);
  CHECK(vocab.size() == 38);
  for (SchemaId s : {SchemaId::Class, SchemaId::Utility, SchemaId::Affordance}) {
    const auto& t = *tables().for_schema(s);
    CHECK(t.groups().size() == 38);
    for (const auto& c : vocab) CHECK(t.contains(c));
  }
  std::set<std::string> affordance_labels;
  for (const auto& [c, g] : tables().affordance_table.groups()) affordance_labels.insert(g);
  CHECK(affordance_labels.size() == 6);
  CHECK(tables().for_schema(SchemaId::OOE) == nullptr);
  CHECK_THROWS_AS(GroupingTable::parse(SchemaId::Class, "bowl\n"), Error);
}

TEST_CASE("schema names") {
  CHECK(parse_schema("ooe") == SchemaId::OOE);
  CHECK(parse_schema("Affordance") == SchemaId::Affordance);
  CHECK(to_string(SchemaId::Utility) == "Utility");
  CHECK_THROWS_AS(parse_schema("Color"), Error);
}

TEST_CASE("schema predicate examples") {
  auto class_goal = SceneState::with_nulls(2, {obj("tomato", 0), obj("potato", 0), obj("spoon", 1), obj("pot", 1)});
  CHECK(verify_schema_consistency(class_goal, SchemaId::Class, tables()));
  auto misplaced = SceneState::with_nulls(2, {obj("potato", 0), obj("tomato", 1), obj("spoon", 1), obj("pot", 1)});
  CHECK_FALSE(verify_schema_consistency(misplaced, SchemaId::Class, tables()));

  auto ooe = SceneState::with_nulls(2, {obj("bowl", 0, 0), obj("cup", 0, 0), obj("bowl", 1, 1), obj("cup", 1, 1)});
  CHECK(verify_schema_consistency(ooe, SchemaId::OOE, tables()));
  auto doubled = SceneState::with_nulls(2, {obj("bowl", 0, 0), obj("bowl", 0, 1), obj("cup", 0, 0), obj("cup", 1, 1)});
  CHECK_FALSE(verify_schema_consistency(doubled, SchemaId::OOE, tables()));
  auto missing = SceneState::with_nulls(2, {obj("bowl", 0, 0), obj("bowl", 1, 1), obj("cup", 0, 0)});
  CHECK_FALSE(verify_schema_consistency(missing, SchemaId::OOE, tables()));
}

TEST_CASE("generated goal scenes satisfy their schema") {
  GenerationConfig config;
  for (SchemaId schema : kAllSchemas) {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      auto goal = generate_goal_scene(schema, seed, config, seen_categories(), tables());
      CHECK(validate_state(goal).empty());
      CHECK(verify_schema_consistency(goal, schema, tables()));
      CHECK(goal.count_on_surface() == 0);
      CHECK(goal.n_containers() >= config.containers_per_scene.lo);
      CHECK(goal.n_containers() <= config.containers_per_scene.hi);
      if (schema == SchemaId::OOE)
        for (const auto& [cat, count] : goal.category_counts()) CHECK(count == goal.n_containers());
    }
  }
  CHECK(generate_goal_scene(SchemaId::Class, 3, config, seen_categories(), tables()) ==
        generate_goal_scene(SchemaId::Class, 3, config, seen_categories(), tables()));
  CHECK(code_of([&] { generate_goal_scene(SchemaId::OOE, 1, config, {}, tables()); }) ==
        ErrorCode::VocabularyTooSmall);
  CHECK(code_of([&] { generate_goal_scene(SchemaId::Class, 1, config, {"bowl"}, tables()); }) ==
        ErrorCode::VocabularyTooSmall);
}

TEST_CASE("derive_initial_state") {
  auto goal = generate_goal_scene(SchemaId::Utility, 9, GenerationConfig{}, seen_categories(), tables());
  const int n = goal.count_real();
  auto all = derive_initial_state(goal, n, 1);
  CHECK(all.count_on_surface() == n);
  CHECK(all.count_empty_containers() == all.n_containers());
  CHECK(validate_state(all).empty());

  auto one = derive_initial_state(goal, 1, 1);
  CHECK(scene_edit_distance(one, goal) == 1);
  CHECK(derive_initial_state(goal, 3, 42) == derive_initial_state(goal, 3, 42));

  CHECK(code_of([&] { derive_initial_state(goal, 0, 1); }) == ErrorCode::RemovalCountOutOfRange);
  CHECK(code_of([&] { derive_initial_state(goal, n + 1, 1); }) == ErrorCode::RemovalCountOutOfRange);
}

TEST_CASE("dataset properties") {
  const auto config = small_config();
  const Dataset d = generate_dataset(config, tables());
  CHECK(d.train.size() == 100);
  CHECK(d.test_unseen.size() == 20);
  const std::set<std::string> unseen(unseen_categories().begin(), unseen_categories().end());
  std::set<std::string> ids;
  for (auto name : kSplitNames) {
    for (const auto& p : split_by_name(d, name)) {
      CHECK(ids.insert(p.scene_id).second);
      CHECK(validate_state(p.initial).empty());
      CHECK(validate_state(p.goal).empty());
      CHECK(verify_schema_consistency(p.goal, p.schema, tables()));
      CHECK(p.initial.category_counts() == p.goal.category_counts());
      CHECK(p.initial.n_containers() == p.goal.n_containers());
      CHECK(p.initial.count_on_surface() > 0);
      CHECK(scene_edit_distance(p.initial, p.goal) == p.initial.count_on_surface());
      CHECK(p.initial.count_empty_containers() <= config.max_empty_containers);
      bool any_unseen = false;
      for (const auto& [cat, count] : p.goal.category_counts()) any_unseen |= unseen.count(cat) > 0;
      CHECK(any_unseen == (name == "test_unseen"));
    }
  }
}

TEST_CASE("generation is a pure function of the config") {
  auto config = small_config();
  const Dataset a = generate_dataset(config, tables());
  config.workers = 3;
  const Dataset b = generate_dataset(config, tables());
  for (auto name : kSplitNames) CHECK(serialize_split(split_by_name(a, name)) == serialize_split(split_by_name(b, name)));

  // A schema subset reproduces exactly the matching scenes.
  config.schemas = {SchemaId::OOE};
  const Dataset ooe = generate_dataset(config, tables());
  std::vector<ScenePair> expected;
  for (const auto& p : a.train)
    if (p.schema == SchemaId::OOE) expected.push_back(p);
  CHECK(serialize_split(ooe.train) == serialize_split(expected));

  config.seed = 18;
  CHECK(serialize_split(generate_dataset(config, tables()).train) != serialize_split(ooe.train));
}

TEST_CASE("default dataset sizes") {
  const Dataset d = generate_dataset(GenerationConfig{}, tables());
  CHECK(d.train.size() == 7920);
  CHECK(d.val.size() == 440);
  CHECK(d.test_seen.size() == 440);
  CHECK(d.test_unseen.size() == 120);
  std::map<SchemaId, int> per;
  for (const auto& p : d.test_unseen) ++per[p.schema];
  for (SchemaId s : kAllSchemas) CHECK(per[s] == 30);
}

TEST_CASE("config validation and json") {
  GenerationConfig c;
  c.schemas.clear();
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::InvalidConfig);
  c.schemas = {SchemaId::OOE, SchemaId::OOE};
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::InvalidConfig);
  c = GenerationConfig{};
  c.removal_fraction = {0.0, 0.5};
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::InvalidConfig);
  c = small_config();
  c.schemas = {SchemaId::Affordance, SchemaId::Class};
  const auto back = GenerationConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
}

TEST_CASE("dataset files round trip and detect tampering") {
  const fs::path dir = fs::temp_directory_path() / "consor_test_dataset";
  fs::remove_all(dir);
  const auto config = small_config();
  const Dataset d = generate_dataset(config, tables());
  const auto written = write_dataset(dir, d, config);
  DatasetManifest loaded_manifest;
  const Dataset back = load_dataset(dir, &loaded_manifest);
  CHECK(loaded_manifest.digest == written.digest);
  for (auto name : kSplitNames) CHECK(serialize_split(split_by_name(back, name)) == serialize_split(split_by_name(d, name)));
  CHECK(written.counts.at("train") == 100);

  // Same config, same bytes.
  const fs::path again = dir / "again";
  CHECK(write_dataset(again, generate_dataset(config, tables()), config).digest == written.digest);
  CHECK(sha256_file(again / "train.jsonl") == sha256_file(dir / "train.jsonl"));

  std::string text = read_file(dir / "val.jsonl");
  text.back() = ' ';
  write_file(dir / "val.jsonl", text);
  CHECK(code_of([&] { load_dataset(dir); }) == ErrorCode::ArtifactMismatch);
  fs::remove_all(dir);
}
