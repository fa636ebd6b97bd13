#pragma once

#include "json.hpp"
#include <string>

#include "consor/scene.hpp"

namespace consor {

using ordered_json = nlohmann::ordered_json;

/// Object array without null instances: [{category, instance_index, receptacle}, ...].
ordered_json objects_to_json(const SceneState& state);
/// Rebuilds a state from a serialized object array; nulls are reconstructed.
SceneState objects_from_json(int n_containers, const ordered_json& objects);

/// One-scene record: {scene_id, schema, n_containers, objects}.
ordered_json scene_to_json(const std::string& scene_id, const std::string& schema, const SceneState& state);
SceneState scene_from_json(const ordered_json& record, std::string* scene_id = nullptr,
                           std::string* schema = nullptr);

}  // namespace consor
