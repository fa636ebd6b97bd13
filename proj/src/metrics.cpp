#include "consor/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>

#include "consor/error.hpp"

namespace consor {

double success_rate(std::span<const EvalRecord> records) {
  if (records.empty()) throw Error(ErrorCode::EmptyRecordSet, "success rate of zero records");
  std::size_t solved = 0;
  for (const auto& r : records) solved += r.sed == 0 ? 1 : 0;
  return static_cast<double>(solved) / static_cast<double>(records.size());
}

std::optional<std::pair<double, double>> avg_nonzero_sed(std::span<const EvalRecord> records) {
  double total = 0.0;
  std::size_t failures = 0;
  for (const auto& r : records) {
    if (r.sed > 0) {
      total += r.sed;
      ++failures;
    }
  }
  if (failures == 0) return std::nullopt;
  const double mean = total / static_cast<double>(failures);
  double ss = 0.0;
  for (const auto& r : records)
    if (r.sed > 0) ss += (r.sed - mean) * (r.sed - mean);
  return std::pair{mean, std::sqrt(ss / static_cast<double>(failures))};
}

MetricSummary summarize(std::span<const EvalRecord> records) {
  MetricSummary s;
  s.count = static_cast<int>(records.size());
  if (records.empty()) return s;
  s.success_rate = success_rate(records);
  if (auto nsed = avg_nonzero_sed(records)) {
    s.nsed_mean = nsed->first;
    s.nsed_sd = nsed->second;
  }
  for (const auto& r : records) s.flagged += r.flagged ? 1 : 0;
  return s;
}

EvalReport build_report(std::span<const EvalRecord> records, std::string model, std::string split) {
  EvalReport report;
  report.model = std::move(model);
  report.split = std::move(split);
  std::map<SchemaId, std::vector<EvalRecord>> grouped;
  for (const auto& r : records) grouped[r.schema].push_back(r);
  for (const auto& [schema, group] : grouped) report.per_schema[schema] = summarize(group);
  report.overall = summarize(records);
  return report;
}

double schema_average_success(const EvalReport& report) {
  if (report.per_schema.empty()) throw Error(ErrorCode::EmptyRecordSet, "report has no schemas");
  double sum = 0.0;
  for (const auto& [schema, summary] : report.per_schema) sum += summary.success_rate;
  return sum / static_cast<double>(report.per_schema.size());
}

EvalRecord score_prediction(const ScenePair& pair, const SceneState& predicted) {
  EvalRecord rec;
  rec.scene_id = pair.scene_id;
  rec.schema = pair.schema;
  rec.n_unarranged = pair.initial.count_on_surface();
  try {
    rec.sed = scene_edit_distance(predicted, pair.goal);
  } catch (const Error& e) {
    rec.sed = rec.n_unarranged;
    rec.flagged = true;
    rec.note = e.what();
    return rec;
  }
  std::vector<std::string> problems = validate_state(predicted);
  if (predicted.count_on_surface() > 0) problems.push_back("objects left on the work surface");
  if (rec.sed > rec.n_unarranged) problems.push_back("prediction moved prearranged objects");
  if (!problems.empty()) {
    rec.flagged = true;
    rec.note = problems.front();
  }
  return rec;
}

Evaluation evaluate_model(const Predictor& predictor, std::span<const ScenePair> split, int workers,
                          std::string model, std::string split_name) {
  Evaluation out;
  out.records.resize(split.size());
  const auto n = static_cast<long>(split.size());
#pragma omp parallel for schedule(dynamic, 4) num_threads(std::max(1, workers))
  for (long i = 0; i < n; ++i) {
    const ScenePair& pair = split[static_cast<std::size_t>(i)];
    try {
      out.records[static_cast<std::size_t>(i)] = score_prediction(pair, predictor(pair));
    } catch (const std::exception& e) {
      EvalRecord rec;
      rec.scene_id = pair.scene_id;
      rec.schema = pair.schema;
      rec.n_unarranged = pair.initial.count_on_surface();
      rec.sed = rec.n_unarranged;
      rec.flagged = true;
      rec.note = std::string("predictor failed: ") + e.what();
      out.records[static_cast<std::size_t>(i)] = std::move(rec);
    }
  }
  out.report = build_report(out.records, std::move(model), std::move(split_name));
  return out;
}

namespace {

ordered_json summary_to_json(const MetricSummary& s) {
  ordered_json j;
  j["D"] = s.count;
  j["success_rate"] = s.success_rate;
  j["nsed_mean"] = s.nsed_mean ? ordered_json(*s.nsed_mean) : ordered_json(nullptr);
  j["nsed_sd"] = s.nsed_sd ? ordered_json(*s.nsed_sd) : ordered_json(nullptr);
  j["flagged"] = s.flagged;
  return j;
}

MetricSummary summary_from_json(const ordered_json& j) {
  MetricSummary s;
  s.count = j.at("D").get<int>();
  s.success_rate = j.at("success_rate").get<double>();
  if (!j.at("nsed_mean").is_null()) s.nsed_mean = j["nsed_mean"].get<double>();
  if (!j.at("nsed_sd").is_null()) s.nsed_sd = j["nsed_sd"].get<double>();
  s.flagged = j.at("flagged").get<int>();
  return s;
}

std::string format_cell(const MetricSummary& s) {
  if (!s.nsed_mean) return "-";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f (SD=%.1f)", *s.nsed_mean, s.nsed_sd.value_or(0.0));
  return buf;
}

std::string format_rate(double r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * r);
  return buf;
}

}  // namespace

std::string render_report(const EvalReport& report, ReportFormat format) {
  if (format == ReportFormat::Structured) {
    ordered_json j;
    j["model"] = report.model;
    j["split"] = report.split;
    ordered_json per = ordered_json::object();
    for (SchemaId schema : kReportOrder) {
      auto it = report.per_schema.find(schema);
      if (it != report.per_schema.end()) per[std::string(to_string(schema))] = summary_to_json(it->second);
    }
    j["per_schema"] = per;
    j["overall"] = summary_to_json(report.overall);
    return j.dump(2) + "\n";
  }

  std::string out;
  if (!report.model.empty() || !report.split.empty())
    out += "Model: " + report.model + "  Split: " + report.split + "\n\n";
  out += "| Schema | D | M^SR | M^NSED |\n|---|---|---|---|\n";
  auto row = [&](std::string_view name, const MetricSummary& s) {
    out += "| " + std::string(name) + " | " + std::to_string(s.count) + " | " + format_rate(s.success_rate) + " | " +
           format_cell(s) + " |\n";
  };
  for (SchemaId schema : kReportOrder) {
    auto it = report.per_schema.find(schema);
    if (it != report.per_schema.end()) row(to_string(schema), it->second);
  }
  row("Overall", report.overall);
  return out;
}

EvalReport parse_report(std::string_view structured) {
  try {
    const auto j = ordered_json::parse(structured);
    EvalReport r;
    r.model = j.at("model").get<std::string>();
    r.split = j.at("split").get<std::string>();
    for (const auto& [name, value] : j.at("per_schema").items()) r.per_schema[parse_schema(name)] = summary_from_json(value);
    r.overall = summary_from_json(j.at("overall"));
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
}

std::string records_to_jsonl(std::span<const EvalRecord> records) {
  std::string out;
  for (const auto& r : records) {
    ordered_json j;
    j["scene_id"] = r.scene_id;
    j["schema"] = std::string(to_string(r.schema));
    j["sed"] = r.sed;
    j["n_unarranged"] = r.n_unarranged;
    j["flagged"] = r.flagged;
    if (!r.note.empty()) j["note"] = r.note;
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace consor
