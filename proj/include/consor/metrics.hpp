#pragma once

// Success rate (fraction of scenes with SED 0) and average non-zero SED over
// evaluation runs, plus report rendering.

#include <array>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "consor/dataset.hpp"

namespace consor {

struct EvalRecord {
  std::string scene_id;
  SchemaId schema = SchemaId::Class;
  int sed = 0;
  int n_unarranged = 0;
  bool flagged = false;  // predictor failed or produced an invalid goal
  std::string note;

  bool operator==(const EvalRecord&) const = default;
};

struct MetricSummary {
  int count = 0;
  double success_rate = 0.0;
  std::optional<double> nsed_mean;  // undefined when every scene is solved
  std::optional<double> nsed_sd;    // population standard deviation
  int flagged = 0;

  bool operator==(const MetricSummary&) const = default;
};

struct EvalReport {
  std::string model;
  std::string split;
  std::map<SchemaId, MetricSummary> per_schema;
  MetricSummary overall;

  bool operator==(const EvalReport&) const = default;
};

/// Column order of the published result tables.
inline constexpr std::array<SchemaId, 4> kReportOrder = {SchemaId::Class, SchemaId::Utility, SchemaId::OOE,
                                                         SchemaId::Affordance};

/// (1/D) * #{sed == 0}. Throws Error(EmptyRecordSet).
double success_rate(std::span<const EvalRecord> records);

/// Mean and population SD of sed over records with sed > 0; nullopt if none.
std::optional<std::pair<double, double>> avg_nonzero_sed(std::span<const EvalRecord> records);

MetricSummary summarize(std::span<const EvalRecord> records);
EvalReport build_report(std::span<const EvalRecord> records, std::string model = {}, std::string split = {});
/// Unweighted mean of the per-schema success rates. Throws Error(EmptyRecordSet).
double schema_average_success(const EvalReport& report);

/// Maps a scene pair to a predicted goal. Implementations must derive the
/// prediction from `pair.initial`; baselines that are given the schema a
/// priori may also read `pair.schema`.
using Predictor = std::function<SceneState(const ScenePair& pair)>;

struct Evaluation {
  std::vector<EvalRecord> records;
  EvalReport report;
};

/// Scores every pair; predictor exceptions score as sed = n_unarranged and are flagged.
Evaluation evaluate_model(const Predictor& predictor, std::span<const ScenePair> split, int workers = 1,
                          std::string model = {}, std::string split_name = {});

/// Scores one prediction against its pair.
EvalRecord score_prediction(const ScenePair& pair, const SceneState& predicted);

enum class ReportFormat { Structured, Markdown };

std::string render_report(const EvalReport& report, ReportFormat format);
/// Inverse of the structured rendering. Throws Error(ParseError).
EvalReport parse_report(std::string_view structured);

std::string records_to_jsonl(std::span<const EvalRecord> records);

}  // namespace consor
