#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "consor/scene.hpp"

namespace consor {

/// Category token -> dense vector. Always holds the reserved "null" token
/// mapped to zeros.
class EmbeddingTable {
 public:
  explicit EmbeddingTable(int dim = 0);

  /// word2vec text: "count dim" header, then `token v1 ... vdim` per line.
  static EmbeddingTable parse(std::string_view text);
  static EmbeddingTable load(const std::filesystem::path& path);
  /// Inverse of parse; the null token is not written.
  std::string serialize() const;

  int dim() const { return dim_; }
  std::size_t size() const { return vectors_.size(); }
  bool contains(std::string_view token) const;
  /// nullptr when absent.
  const std::vector<double>* find(std::string_view token) const;
  void insert(const std::string& token, std::vector<double> vec);
  const std::map<std::string, std::vector<double>, std::less<>>& vectors() const { return vectors_; }

  bool operator==(const EmbeddingTable&) const = default;

 private:
  int dim_;
  std::map<std::string, std::vector<double>, std::less<>> vectors_;
};

/// Sinusoidal encoding: [2k] = sin(p / 10000^(2k/dim)), [2k+1] = cos(same).
std::vector<double> positional_encoding(int position, int dim);

class PositionalEncoder {
 public:
  PositionalEncoder(int dim, int max_positions);
  int dim() const { return dim_; }
  int max_positions() const { return max_positions_; }
  /// Throws Error(PositionOutOfRange).
  std::vector<double> encode(int position) const;

 private:
  int dim_;
  int max_positions_;
  std::vector<std::vector<double>> cache_;
};

/// Receptacle slot used by the encoder: surface 0, container k at k + 1.
inline int receptacle_position(const ReceptacleId& r) { return r.is_surface() ? 0 : r.index + 1; }

/// One row per object instance, in the canonical order of `order`.
struct SceneTokens {
  std::vector<ObjectInstance> order;
  int dim = 0;
  std::vector<double> data;  // row-major, order.size() x dim

  std::size_t count() const { return order.size(); }
  std::span<const double> row(std::size_t i) const {
    return {data.data() + i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
  }
};

struct TokenEncoder {
  const EmbeddingTable* table = nullptr;
  PositionalEncoder receptacle{16, 16};
  PositionalEncoder index{16, 16};
  /// When false, unknown categories map to zeros with a warning.
  bool strict_vocabulary = false;

  int token_dim() const { return table->dim() + receptacle.dim() + index.dim(); }
};

/// token = [category vector | receptacle encoding | instance-index encoding].
/// Throws Error(UnknownCategory) in strict mode.
SceneTokens encode_scene(const SceneState& state, const TokenEncoder& encoder);

}  // namespace consor
