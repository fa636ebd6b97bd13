#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>

#include "consor/dataset.hpp"
#include "consor/embedding.hpp"
#include "consor/error.hpp"

using namespace consor;

namespace {

std::string table_text(int rows, int dim, int short_row = -1) {
  std::ostringstream s;
  s << rows << " " << dim << "\n";
  for (int r = 0; r < rows; ++r) {
    s << "tok" << r;
    const int n = r == short_row ? dim - 1 : dim;
    for (int d = 0; d < n; ++d) s << " " << (r + 1) * 0.01 * (d + 1);
    s << "\n";
  }
  return s.str();
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

ObjectInstance obj(std::string cat, ReceptacleId r, int i = 0) { return {std::move(cat), r, i, false}; }

}  // namespace

TEST_CASE("embedding table parsing") {
  auto t = EmbeddingTable::parse(table_text(3, 50));
  CHECK(t.dim() == 50);
  CHECK(t.size() == 4);
  REQUIRE(t.find("null") != nullptr);
  for (double v : *t.find("null")) CHECK(v == 0.0);
  CHECK(t.find("tok1")->at(1) == doctest::Approx(0.04));

  CHECK(EmbeddingTable::parse(t.serialize()) == t);

  CHECK(code_of([] { EmbeddingTable::parse(table_text(3, 50, 1)); }) == ErrorCode::DimensionMismatch);
  try {
    EmbeddingTable::parse(table_text(3, 50, 1));
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  CHECK(code_of([] { EmbeddingTable::parse("three 50\n"); }) == ErrorCode::MalformedHeader);
  CHECK(code_of([] { EmbeddingTable::parse("1 2\na 1 2\na 3 4\n"); }) == ErrorCode::DuplicateToken);
  CHECK(code_of([] { EmbeddingTable::parse("2 2\na 1 2\n"); }) == ErrorCode::MalformedHeader);
}

TEST_CASE("shipped table covers the vocabulary") {
  auto t = EmbeddingTable::load(default_data_dir() / "embeddings" / "objects-50d.txt");
  CHECK(t.dim() == 50);
  for (const auto& c : seen_categories()) CHECK(t.contains(c));
  for (const auto& c : unseen_categories()) CHECK(t.contains(c));
}

TEST_CASE("sinusoidal positional encoding") {
  auto p0 = positional_encoding(0, 16);
  for (std::size_t i = 0; i < p0.size(); ++i) CHECK(p0[i] == (i % 2 == 0 ? 0.0 : 1.0));
  auto p1 = positional_encoding(1, 16);
  CHECK(p1[0] - p0[0] == doctest::Approx(std::sin(1.0)).epsilon(1e-12));
  CHECK(p1[0] == doctest::Approx(0.8415).epsilon(1e-4));
  // Component 2k uses frequency 10000^(-2k/dim).
  CHECK(p1[4] == doctest::Approx(std::sin(1.0 / std::pow(10000.0, 4.0 / 16.0))));
  CHECK(p1[5] == doctest::Approx(std::cos(1.0 / std::pow(10000.0, 4.0 / 16.0))));
  CHECK(positional_encoding(7, 16) == positional_encoding(7, 16));

  PositionalEncoder enc(16, 16);
  for (int a = 0; a < 16; ++a)
    for (int b = a + 1; b < 16; ++b) CHECK(enc.encode(a) != enc.encode(b));
  CHECK(code_of([&] { enc.encode(16); }) == ErrorCode::PositionOutOfRange);
}

TEST_CASE("scene tokens") {
  auto table = EmbeddingTable::parse(table_text(3, 4));
  TokenEncoder te;
  te.table = &table;
  CHECK(te.token_dim() == 36);

  auto only_null = SceneState::with_nulls(1, {});
  auto tok = encode_scene(only_null, te);
  REQUIRE(tok.count() == 1);
  std::vector<double> expect(4, 0.0);
  auto r = te.receptacle.encode(1);
  auto i = te.index.encode(0);
  expect.insert(expect.end(), r.begin(), r.end());
  expect.insert(expect.end(), i.begin(), i.end());
  CHECK(std::vector<double>(tok.row(0).begin(), tok.row(0).end()) == expect);

  auto twins = SceneState::with_nulls(1, {obj("tok0", ReceptacleId::container(0), 0),
                                          obj("tok0", ReceptacleId::container(0), 1)});
  auto tt = encode_scene(twins, te);
  for (int d = 0; d < 20; ++d) CHECK(tt.row(0)[static_cast<std::size_t>(d)] == tt.row(1)[static_cast<std::size_t>(d)]);
  bool index_differs = false;
  for (int d = 20; d < 36; ++d) index_differs |= tt.row(0)[static_cast<std::size_t>(d)] != tt.row(1)[static_cast<std::size_t>(d)];
  CHECK(index_differs);

  // Surface is receptacle position 0.
  auto surf = encode_scene(SceneState::with_nulls(1, {obj("tok1", ReceptacleId::surface())}), te);
  const auto s0 = te.receptacle.encode(0);
  CHECK(surf.order[0].category == "tok1");  // the surface sorts first
  for (std::size_t d = 0; d < 16; ++d) CHECK(surf.row(0)[4 + d] == s0[d]);
}

TEST_CASE("unknown categories") {
  auto table = EmbeddingTable::parse(table_text(1, 4));
  TokenEncoder te;
  te.table = &table;
  auto s = SceneState::with_nulls(1, {obj("mystery", ReceptacleId::container(0))});
  auto tok = encode_scene(s, te);
  for (std::size_t d = 0; d < 4; ++d) CHECK(tok.row(0)[d] == 0.0);
  te.strict_vocabulary = true;
  CHECK(code_of([&] { encode_scene(s, te); }) == ErrorCode::UnknownCategory);
}

TEST_CASE("token shapes over a generated dataset") {
  auto table = EmbeddingTable::load(default_data_dir() / "embeddings" / "objects-50d.txt");
  TokenEncoder te;
  te.table = &table;
  te.strict_vocabulary = true;
  GenerationConfig c;
  c.train_per_schema = 20;
  c.val_per_schema = c.test_per_schema = c.test_unseen_per_schema = 5;
  auto d = generate_dataset(c, GroupingTables::load(default_data_dir() / "groupings"));
  for (auto name : kSplitNames)
    for (const auto& p : split_by_name(d, name)) {
      auto tok = encode_scene(p.initial, te);
      CHECK(tok.count() == p.initial.size());
      CHECK(tok.data.size() == tok.count() * 82);
      CHECK(tok.order == p.initial.objects());
      CHECK(encode_scene(p.initial, te).data == tok.data);
    }
}
