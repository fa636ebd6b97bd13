#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "consor/error.hpp"
#include "consor/metrics.hpp"
#include "consor/rng.hpp"

using namespace consor;

namespace {

EvalRecord rec(int sed, SchemaId schema = SchemaId::Class) {
  EvalRecord r;
  r.scene_id = "s" + std::to_string(sed);
  r.schema = schema;
  r.sed = sed;
  r.n_unarranged = std::max(sed, 1);
  return r;
}

std::vector<EvalRecord> random_records(Rng& rng, int n) {
  std::vector<EvalRecord> out;
  for (int i = 0; i < n; ++i) {
    auto r = rec(uniform_int(rng, 0, 1) ? 0 : uniform_int(rng, 0, 9), kAllSchemas[static_cast<std::size_t>(uniform_int(rng, 0, 3))]);
    r.scene_id = "s" + std::to_string(i);
    out.push_back(r);
  }
  return out;
}

ObjectInstance obj(std::string cat, ReceptacleId r, int i = 0) { return {std::move(cat), r, i, false}; }

ScenePair toy_pair() {
  const auto C = ReceptacleId::container;
  ScenePair p;
  p.scene_id = "toy";
  p.schema = SchemaId::Utility;
  p.goal = SceneState::with_nulls(2, {obj("bowl", C(0)), obj("cup", C(0)), obj("pen", C(1)), obj("book", C(1))});
  p.initial = SceneState::with_nulls(
      2, {obj("bowl", C(0)), obj("cup", ReceptacleId::surface()), obj("pen", C(1)), obj("book", ReceptacleId::surface())});
  return p;
}

}  // namespace

TEST_CASE("worked examples") {
  std::vector<EvalRecord> a{rec(0), rec(0), rec(1), rec(3)};
  CHECK(success_rate(a) == 0.5);
  std::vector<EvalRecord> b{rec(0), rec(2), rec(4)};
  auto s = avg_nonzero_sed(b);
  REQUIRE(s);
  CHECK(s->first == 3.0);
  CHECK(s->second == 1.0);
  std::vector<EvalRecord> solved{rec(0), rec(0)};
  CHECK_FALSE(avg_nonzero_sed(solved));
  CHECK(summarize(solved).success_rate == 1.0);
  try {
    success_rate(std::span<const EvalRecord>{});
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyRecordSet);
  }
}

TEST_CASE("summaries match direct summation") {
  Rng rng(42);
  for (int trial = 0; trial < 100; ++trial) {
    const auto records = random_records(rng, uniform_int(rng, 1, 60));
    int zeros = 0;
    double sum = 0.0;
    int nz = 0;
    for (const auto& r : records) {
      if (r.sed == 0) ++zeros;
      else {
        sum += r.sed;
        ++nz;
      }
    }
    CHECK(success_rate(records) == doctest::Approx(static_cast<double>(zeros) / static_cast<double>(records.size())).epsilon(1e-12));
    const auto got = avg_nonzero_sed(records);
    CHECK(got.has_value() == (nz > 0));
    if (nz > 0) {
      const double mean = sum / nz;
      double var = 0.0;
      for (const auto& r : records)
        if (r.sed > 0) var += (r.sed - mean) * (r.sed - mean) / nz;
      CHECK(got->first == doctest::Approx(mean).epsilon(1e-12));
      CHECK(got->second == doctest::Approx(std::sqrt(var)).epsilon(1e-12));
    }

    const auto report = build_report(records);
    int total = 0;
    double avg = 0.0;
    for (const auto& [schema, summary] : report.per_schema) {
      total += summary.count;
      avg += summary.success_rate / static_cast<double>(report.per_schema.size());
      std::vector<EvalRecord> subset;
      for (const auto& r : records)
        if (r.schema == schema) subset.push_back(r);
      CHECK(summary == summarize(subset));
    }
    CHECK(total == static_cast<int>(records.size()));
    CHECK(report.overall == summarize(records));
    CHECK(schema_average_success(report) == doctest::Approx(avg).epsilon(1e-12));

    // Success rate of a union is the count-weighted mix of its parts.
    const std::size_t cut = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(records.size())));
    if (cut > 0 && cut < records.size()) {
      std::span<const EvalRecord> all(records), left = all.first(cut), right = all.subspan(cut);
      const double mixed = (success_rate(left) * static_cast<double>(left.size()) +
                            success_rate(right) * static_cast<double>(right.size())) /
                           static_cast<double>(records.size());
      CHECK(success_rate(records) == doctest::Approx(mixed).epsilon(1e-12));
    }
  }
}

TEST_CASE("report rendering") {
  Rng rng(3);
  auto records = random_records(rng, 40);
  for (auto& r : records)
    if (r.schema == SchemaId::OOE) r.sed = 0;
  records.push_back(rec(0, SchemaId::OOE));
  const auto report = build_report(records, "consor", "test_seen");
  CHECK(parse_report(render_report(report, ReportFormat::Structured)) == report);
  const auto md = render_report(report, ReportFormat::Markdown);
  CHECK(std::count(md.begin(), md.end(), '\n') == 2 + 2 + static_cast<long>(report.per_schema.size()) + 1);
  CHECK(md.find("| OOE | ") != std::string::npos);
  const auto ooe_line = md.substr(md.find("| OOE |"), md.find('\n', md.find("| OOE |")) - md.find("| OOE |"));
  CHECK(ooe_line.ends_with("| 100.0% | - |"));
  CHECK(md.find("| Overall |") != std::string::npos);
  CHECK(md.find("Class") < md.find("Utility"));
  CHECK(md.find("Utility") < md.find("OOE"));

  try {
    parse_report("{\"model\": 1}");
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ParseError);
  }
  const auto jsonl = records_to_jsonl(records);
  CHECK(std::count(jsonl.begin(), jsonl.end(), '\n') == static_cast<long>(records.size()));
}

TEST_CASE("scoring and evaluation") {
  const auto pair = toy_pair();
  CHECK(score_prediction(pair, pair.goal).sed == 0);
  CHECK_FALSE(score_prediction(pair, pair.goal).flagged);

  const auto C = ReceptacleId::container;
  auto wrong = move_object(move_object(pair.initial, "cup", 0, C(1)), "book", 0, C(0));
  auto r = score_prediction(pair, wrong);
  CHECK(r.sed == 2);
  CHECK(r.n_unarranged == 2);
  CHECK_FALSE(r.flagged);

  auto left = score_prediction(pair, pair.initial);
  CHECK(left.flagged);

  std::vector<ScenePair> split(10, pair);
  for (int i = 0; i < 10; ++i) split[static_cast<std::size_t>(i)].scene_id = "p" + std::to_string(i);
  auto eval = evaluate_model(
      [&](const ScenePair& p) -> SceneState {
        if (p.scene_id == "p3") throw std::runtime_error("boom");
        return p.scene_id == "p5" ? wrong : p.goal;
      },
      split, 1, "m", "x");
  CHECK(eval.records.size() == 10);
  CHECK(eval.records[3].flagged);
  CHECK(eval.records[3].sed == 2);
  CHECK(eval.records[3].note.find("boom") != std::string::npos);
  CHECK(eval.report.overall.success_rate == doctest::Approx(0.8));
  CHECK(eval.report.overall.flagged == 1);

  auto oracle = [](const ScenePair& p) { return p.goal; };
  CHECK(evaluate_model(oracle, split, 1).records == evaluate_model(oracle, split, 3).records);
}
