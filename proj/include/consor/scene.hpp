#pragma once

// Symbolic rearrangement scenes: a work surface plus N_C containers holding
// object instances (category, receptacle, instance index). Empty containers
// carry a placeholder "null" instance so every receptacle is represented.

#include <compare>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace consor {

inline constexpr std::string_view kNullCategory = "null";

struct ReceptacleId {
  enum class Kind { Surface, Container };

  Kind kind = Kind::Surface;
  int index = -1;  // container slot; -1 for the surface

  static ReceptacleId surface() { return {Kind::Surface, -1}; }
  static ReceptacleId container(int k) { return {Kind::Container, k}; }

  bool is_surface() const { return kind == Kind::Surface; }

  /// Surface sorts before every container; containers by index.
  auto operator<=>(const ReceptacleId&) const = default;

  /// "T" or "C<k>".
  std::string to_string() const;
  /// Inverse of to_string; throws Error(ParseError).
  static ReceptacleId parse(std::string_view text);
};

struct ObjectInstance {
  std::string category;
  ReceptacleId receptacle;
  int instance_index = 0;
  bool is_null = false;

  static ObjectInstance null_in(int container) {
    return {std::string(kNullCategory), ReceptacleId::container(container), 0, true};
  }

  bool operator==(const ObjectInstance&) const = default;
};

/// Canonical order: receptacle, then category, then instance index.
bool canonical_less(const ObjectInstance& a, const ObjectInstance& b);

using InstanceKey = std::pair<std::string, int>;  // (category, instance_index)
using Histogram = std::map<std::pair<std::string, ReceptacleId>, int>;

/// Immutable scene value. Objects are kept in canonical order.
class SceneState {
 public:
  SceneState() = default;
  /// Stores `objects` as given (sorted); no invariant checking, see validate_state.
  SceneState(int n_containers, std::vector<ObjectInstance> objects);

  /// Builds a state from non-null objects and inserts a null into every empty container.
  static SceneState with_nulls(int n_containers, std::vector<ObjectInstance> objects);

  int n_containers() const { return n_containers_; }
  const std::vector<ObjectInstance>& objects() const { return objects_; }
  std::size_t size() const { return objects_.size(); }

  /// Non-null instances in canonical order.
  std::vector<ObjectInstance> real_objects() const;
  /// Non-null instances on the surface (the unarranged set).
  std::vector<ObjectInstance> surface_objects() const;
  int count_on_surface() const;
  int count_real() const;
  /// Containers holding no non-null instance.
  int count_empty_containers() const;

  const ObjectInstance* find(std::string_view category, int instance_index) const;

  /// Multiset of non-null categories.
  std::map<std::string, int> category_counts() const;

  bool operator==(const SceneState&) const = default;

 private:
  int n_containers_ = 0;
  std::vector<ObjectInstance> objects_;
};

/// Empty iff every scene invariant holds.
std::vector<std::string> validate_state(const SceneState& state);

/// Moves one non-null instance and re-establishes null bookkeeping.
/// Throws Error(UnknownInstance) / Error(UnknownReceptacle).
SceneState move_object(const SceneState& state, std::string_view category, int instance_index,
                       ReceptacleId dest);

/// Minimum number of displacements turning `a` into `b`, with same-category
/// instances interchangeable and nulls ignored. Throws Error(IncompatibleScenes).
int scene_edit_distance(const SceneState& a, const SceneState& b);

Histogram category_histogram(const SceneState& state);

}  // namespace consor
