#include "consor/scene_io.hpp"

#include "consor/error.hpp"

namespace consor {

ordered_json objects_to_json(const SceneState& state) {
  ordered_json arr = ordered_json::array();
  for (const auto& o : state.objects()) {
    if (o.is_null) continue;
    ordered_json rec;
    rec["category"] = o.category;
    rec["instance_index"] = o.instance_index;
    rec["receptacle"] = o.receptacle.to_string();
    arr.push_back(std::move(rec));
  }
  return arr;
}

SceneState objects_from_json(int n_containers, const ordered_json& objects) {
  if (!objects.is_array()) throw Error(ErrorCode::ParseError, "objects must be an array");
  std::vector<ObjectInstance> out;
  out.reserve(objects.size());
  try {
    for (const auto& rec : objects) {
      ObjectInstance o;
      o.category = rec.at("category").get<std::string>();
      o.instance_index = rec.at("instance_index").get<int>();
      o.receptacle = ReceptacleId::parse(rec.at("receptacle").get<std::string>());
      out.push_back(std::move(o));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  return SceneState::with_nulls(n_containers, std::move(out));
}

ordered_json scene_to_json(const std::string& scene_id, const std::string& schema, const SceneState& state) {
  ordered_json rec;
  rec["scene_id"] = scene_id;
  rec["schema"] = schema;
  rec["n_containers"] = state.n_containers();
  rec["objects"] = objects_to_json(state);
  return rec;
}

SceneState scene_from_json(const ordered_json& record, std::string* scene_id, std::string* schema) {
  try {
    if (scene_id) *scene_id = record.at("scene_id").get<std::string>();
    if (schema) *schema = record.at("schema").get<std::string>();
    return objects_from_json(record.at("n_containers").get<int>(), record.at("objects"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
}

}  // namespace consor
