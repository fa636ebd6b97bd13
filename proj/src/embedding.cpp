#include "consor/embedding.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <mutex>
#include <set>

#include "consor/digest.hpp"
#include "consor/error.hpp"

namespace consor {

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

void warn_unknown_category(const std::string& category) {
  static std::mutex mutex;
  static std::set<std::string> warned;
  std::lock_guard lock(mutex);
  if (warned.insert(category).second)
    std::cerr << "warning: no embedding for category '" << category << "'; using the zero vector\n";
}

}  // namespace

EmbeddingTable::EmbeddingTable(int dim) : dim_(dim) {
  vectors_.emplace(std::string(kNullCategory), std::vector<double>(static_cast<std::size_t>(std::max(dim, 0)), 0.0));
}

bool EmbeddingTable::contains(std::string_view token) const { return vectors_.find(token) != vectors_.end(); }

const std::vector<double>* EmbeddingTable::find(std::string_view token) const {
  auto it = vectors_.find(token);
  return it == vectors_.end() ? nullptr : &it->second;
}

void EmbeddingTable::insert(const std::string& token, std::vector<double> vec) {
  if (static_cast<int>(vec.size()) != dim_)
    throw Error(ErrorCode::DimensionMismatch, "'" + token + "' has " + std::to_string(vec.size()) +
                                                  " values, expected " + std::to_string(dim_));
  if (!vectors_.emplace(token, std::move(vec)).second) throw Error(ErrorCode::DuplicateToken, "'" + token + "'");
}

EmbeddingTable EmbeddingTable::parse(std::string_view text) {
  std::size_t pos = 0;
  auto next_line = [&]() -> std::string_view {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    pos = end + 1;
    return line;
  };

  const auto header = split_ws(next_line());
  long count = 0;
  int dim = 0;
  if (header.size() != 2 || !parse_number(header[0], count) || !parse_number(header[1], dim) || count < 0 || dim <= 0)
    throw Error(ErrorCode::MalformedHeader, "expected 'count dim' on line 1");

  EmbeddingTable table(dim);
  int lineno = 1;
  long rows = 0;
  while (pos < text.size()) {
    auto line = next_line();
    ++lineno;
    auto fields = split_ws(line);
    if (fields.empty()) continue;
    if (static_cast<int>(fields.size()) - 1 != dim)
      throw Error(ErrorCode::DimensionMismatch, "line " + std::to_string(lineno) + " has " +
                                                    std::to_string(fields.size() - 1) + " values, expected " +
                                                    std::to_string(dim));
    std::vector<double> vec(static_cast<std::size_t>(dim));
    for (int d = 0; d < dim; ++d) {
      if (!parse_number(fields[static_cast<std::size_t>(d) + 1], vec[static_cast<std::size_t>(d)]))
        throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": bad number");
    }
    const std::string token(fields[0]);
    if (table.contains(token))
      throw Error(ErrorCode::DuplicateToken, "line " + std::to_string(lineno) + ": '" + token + "'");
    table.insert(token, std::move(vec));
    ++rows;
  }
  if (rows != count)
    throw Error(ErrorCode::MalformedHeader, "header declares " + std::to_string(count) + " rows, found " +
                                                std::to_string(rows));
  return table;
}

EmbeddingTable EmbeddingTable::load(const std::filesystem::path& path) { return parse(read_file(path)); }

std::string EmbeddingTable::serialize() const {
  std::string out = std::to_string(vectors_.size() - 1) + " " + std::to_string(dim_) + "\n";
  char buf[64];
  for (const auto& [token, vec] : vectors_) {
    if (token == kNullCategory) continue;
    out += token;
    for (double v : vec) {
      // %.17g round-trips every double exactly.
      std::snprintf(buf, sizeof buf, " %.17g", v);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

std::vector<double> positional_encoding(int position, int dim) {
  if (position < 0) throw Error(ErrorCode::PositionOutOfRange, "negative position");
  if (dim <= 0) throw Error(ErrorCode::InvalidConfig, "positional dim must be positive");
  std::vector<double> enc(static_cast<std::size_t>(dim));
  for (int i = 0; i < dim; i += 2) {
    const double freq = std::pow(10000.0, static_cast<double>(i) / dim);
    enc[static_cast<std::size_t>(i)] = std::sin(position / freq);
    if (i + 1 < dim) enc[static_cast<std::size_t>(i) + 1] = std::cos(position / freq);
  }
  return enc;
}

PositionalEncoder::PositionalEncoder(int dim, int max_positions) : dim_(dim), max_positions_(max_positions) {
  if (dim <= 0 || max_positions <= 0) throw Error(ErrorCode::InvalidConfig, "positional encoder sizes must be positive");
  cache_.reserve(static_cast<std::size_t>(max_positions));
  for (int p = 0; p < max_positions; ++p) cache_.push_back(positional_encoding(p, dim));
}

std::vector<double> PositionalEncoder::encode(int position) const {
  if (position < 0 || position >= max_positions_)
    throw Error(ErrorCode::PositionOutOfRange, "position " + std::to_string(position) + " outside [0," +
                                                   std::to_string(max_positions_) + ")");
  return cache_[static_cast<std::size_t>(position)];
}

SceneTokens encode_scene(const SceneState& state, const TokenEncoder& encoder) {
  SceneTokens out;
  out.order = state.objects();
  out.dim = encoder.token_dim();
  out.data.reserve(out.order.size() * static_cast<std::size_t>(out.dim));
  const std::vector<double> zeros(static_cast<std::size_t>(encoder.table->dim()), 0.0);
  for (const auto& o : out.order) {
    const std::vector<double>* category = o.is_null ? &zeros : encoder.table->find(o.category);
    if (category == nullptr) {
      if (encoder.strict_vocabulary) throw Error(ErrorCode::UnknownCategory, "'" + o.category + "'");
      warn_unknown_category(o.category);
      category = &zeros;
    }
    const auto r = encoder.receptacle.encode(receptacle_position(o.receptacle));
    const auto i = encoder.index.encode(o.instance_index);
    out.data.insert(out.data.end(), category->begin(), category->end());
    out.data.insert(out.data.end(), r.begin(), r.end());
    out.data.insert(out.data.end(), i.begin(), i.end());
  }
  return out;
}

}  // namespace consor
