#include "consor/scene.hpp"

#include <algorithm>
#include <charconv>
#include <set>

#include "consor/error.hpp"

namespace consor {

std::string ReceptacleId::to_string() const {
  return is_surface() ? std::string("T") : "C" + std::to_string(index);
}

ReceptacleId ReceptacleId::parse(std::string_view text) {
  if (text == "T") return surface();
  if (text.size() >= 2 && text.front() == 'C') {
    int k = -1;
    auto [ptr, ec] = std::from_chars(text.data() + 1, text.data() + text.size(), k);
    if (ec == std::errc() && ptr == text.data() + text.size() && k >= 0) return container(k);
  }
  throw Error(ErrorCode::ParseError, "bad receptacle '" + std::string(text) + "'");
}

bool canonical_less(const ObjectInstance& a, const ObjectInstance& b) {
  if (a.receptacle != b.receptacle) return a.receptacle < b.receptacle;
  if (a.category != b.category) return a.category < b.category;
  return a.instance_index < b.instance_index;
}

SceneState::SceneState(int n_containers, std::vector<ObjectInstance> objects)
    : n_containers_(n_containers), objects_(std::move(objects)) {
  std::stable_sort(objects_.begin(), objects_.end(), canonical_less);
}

SceneState SceneState::with_nulls(int n_containers, std::vector<ObjectInstance> objects) {
  std::erase_if(objects, [](const ObjectInstance& o) { return o.is_null; });
  std::vector<bool> occupied(static_cast<std::size_t>(std::max(n_containers, 0)), false);
  for (const auto& o : objects) {
    if (!o.receptacle.is_surface() && o.receptacle.index >= 0 && o.receptacle.index < n_containers)
      occupied[static_cast<std::size_t>(o.receptacle.index)] = true;
  }
  for (int c = 0; c < n_containers; ++c) {
    if (!occupied[static_cast<std::size_t>(c)]) objects.push_back(ObjectInstance::null_in(c));
  }
  return SceneState(n_containers, std::move(objects));
}

std::vector<ObjectInstance> SceneState::real_objects() const {
  std::vector<ObjectInstance> out;
  for (const auto& o : objects_)
    if (!o.is_null) out.push_back(o);
  return out;
}

std::vector<ObjectInstance> SceneState::surface_objects() const {
  std::vector<ObjectInstance> out;
  for (const auto& o : objects_)
    if (!o.is_null && o.receptacle.is_surface()) out.push_back(o);
  return out;
}

int SceneState::count_on_surface() const {
  return static_cast<int>(std::count_if(objects_.begin(), objects_.end(), [](const auto& o) {
    return !o.is_null && o.receptacle.is_surface();
  }));
}

int SceneState::count_real() const {
  return static_cast<int>(
      std::count_if(objects_.begin(), objects_.end(), [](const auto& o) { return !o.is_null; }));
}

int SceneState::count_empty_containers() const {
  std::set<int> used;
  for (const auto& o : objects_)
    if (!o.is_null && !o.receptacle.is_surface()) used.insert(o.receptacle.index);
  return n_containers_ - static_cast<int>(used.size());
}

const ObjectInstance* SceneState::find(std::string_view category, int instance_index) const {
  for (const auto& o : objects_)
    if (!o.is_null && o.category == category && o.instance_index == instance_index) return &o;
  return nullptr;
}

std::map<std::string, int> SceneState::category_counts() const {
  std::map<std::string, int> counts;
  for (const auto& o : objects_)
    if (!o.is_null) ++counts[o.category];
  return counts;
}

std::vector<std::string> validate_state(const SceneState& state) {
  std::vector<std::string> violations;
  const int n = state.n_containers();
  if (n < 1) violations.push_back("scene has " + std::to_string(n) + " containers; need at least one");

  auto describe = [](const ObjectInstance& o) {
    return "(" + o.category + "," + std::to_string(o.instance_index) + ")@" + o.receptacle.to_string();
  };

  std::map<std::string, std::set<int>> indices;
  std::vector<int> real_in(static_cast<std::size_t>(std::max(n, 0)), 0);
  std::vector<int> nulls_in(static_cast<std::size_t>(std::max(n, 0)), 0);

  for (const auto& o : state.objects()) {
    const bool bad_receptacle =
        !o.receptacle.is_surface() && (o.receptacle.index < 0 || o.receptacle.index >= n);
    if (bad_receptacle) violations.push_back("instance " + describe(o) + " references missing receptacle");
    if (o.is_null) {
      if (o.category != kNullCategory || o.instance_index != 0)
        violations.push_back("null instance " + describe(o) + " must be (null,0)");
      if (o.receptacle.is_surface()) violations.push_back("null instance on the work surface");
      else if (!bad_receptacle) ++nulls_in[static_cast<std::size_t>(o.receptacle.index)];
      continue;
    }
    if (o.category == kNullCategory) violations.push_back("instance " + describe(o) + " uses reserved category");
    if (o.instance_index < 0) violations.push_back("instance " + describe(o) + " has negative index");
    if (!indices[o.category].insert(o.instance_index).second)
      violations.push_back("duplicate instance " + describe(o));
    if (!o.receptacle.is_surface() && !bad_receptacle) ++real_in[static_cast<std::size_t>(o.receptacle.index)];
  }

  for (const auto& [category, idx] : indices) {
    int expected = 0;
    for (int i : idx) {
      if (i != expected) {
        violations.push_back("instance indices of '" + category + "' are not contiguous from 0");
        break;
      }
      ++expected;
    }
  }

  for (int c = 0; c < n; ++c) {
    const auto k = static_cast<std::size_t>(c);
    if (real_in[k] == 0 && nulls_in[k] != 1)
      violations.push_back("container C" + std::to_string(c) + " is empty but holds " +
                           std::to_string(nulls_in[k]) + " null instances");
    if (real_in[k] > 0 && nulls_in[k] != 0)
      violations.push_back("container C" + std::to_string(c) + " is occupied but holds a null instance");
  }
  return violations;
}

SceneState move_object(const SceneState& state, std::string_view category, int instance_index,
                       ReceptacleId dest) {
  if (!dest.is_surface() && (dest.index < 0 || dest.index >= state.n_containers()))
    throw Error(ErrorCode::UnknownReceptacle, "destination " + dest.to_string());
  if (state.find(category, instance_index) == nullptr)
    throw Error(ErrorCode::UnknownInstance,
                "(" + std::string(category) + "," + std::to_string(instance_index) + ")");

  std::vector<ObjectInstance> objects = state.real_objects();
  for (auto& o : objects) {
    if (o.category == category && o.instance_index == instance_index) o.receptacle = dest;
  }
  return SceneState::with_nulls(state.n_containers(), std::move(objects));
}

Histogram category_histogram(const SceneState& state) {
  Histogram h;
  for (const auto& o : state.objects())
    if (!o.is_null) ++h[{o.category, o.receptacle}];
  return h;
}

int scene_edit_distance(const SceneState& a, const SceneState& b) {
  if (a.n_containers() != b.n_containers())
    throw Error(ErrorCode::IncompatibleScenes, "container counts differ (" + std::to_string(a.n_containers()) +
                                                   " vs " + std::to_string(b.n_containers()) + ")");
  if (a.category_counts() != b.category_counts())
    throw Error(ErrorCode::IncompatibleScenes, "category multisets differ");

  const Histogram ha = category_histogram(a);
  const Histogram hb = category_histogram(b);
  int distance = 0;
  for (const auto& [key, count] : ha) {
    auto it = hb.find(key);
    const int other = it == hb.end() ? 0 : it->second;
    distance += std::max(0, count - other);
  }
  return distance;
}

}  // namespace consor
