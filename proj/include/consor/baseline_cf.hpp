#pragma once

// Pairwise-similarity baseline. Similarities are co-occurrence rates fitted
// per schema from training goal scenes; a scene is completed by spectral
// clustering its categories into one cluster per container. The schema label
// is an input here, unlike the learned encoder.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "consor/assignment.hpp"
#include "consor/dataset.hpp"
#include "consor/metrics.hpp"

namespace consor {

struct SimilarityMatrix {
  SchemaId schema = SchemaId::Class;
  std::vector<std::string> categories;  // sorted
  std::vector<double> values;           // row-major, symmetric, unit diagonal

  std::size_t size() const { return categories.size(); }
  double at(std::size_t i, std::size_t j) const { return values[i * categories.size() + j]; }
  std::optional<std::size_t> index_of(std::string_view category) const;
  /// Similarity between two categories; 0 off-diagonal when either is unknown.
  double similarity(std::string_view a, std::string_view b) const;

  /// Tab-separated square table; the header row is the schema name followed by the categories.
  std::string serialize() const;
  /// Throws Error(ParseError).
  static SimilarityMatrix parse(std::string_view text);

  bool operator==(const SimilarityMatrix&) const = default;
};

/// values[i][j] = #(goal scenes with i and j in one container) / #(goal scenes with both).
/// Throws Error(EmptySchemaSlice).
SimilarityMatrix fit_pairwise_similarity(std::span<const ScenePair> train, SchemaId schema);

struct Clustering {
  std::vector<int> labels;  // per row, in [0, k)
  bool degenerate = false;  // all-zero affinity; labels are round-robin
};

/// Normalized-Laplacian spectral clustering of a symmetric n x n affinity:
/// embed on the k smallest eigenvectors of I - D^-1/2 S D^-1/2, normalize
/// rows, then k-means from a farthest-point start seeded by `seed`.
/// Cluster labels are numbered in order of first appearance.
Clustering spectral_cluster(const std::vector<double>& affinity, std::size_t n, int k, std::uint64_t seed = 0);

/// Places every surface object in the container matched to its category's cluster.
SceneState predict_cf(const SceneState& initial, const SimilarityMatrix& sim);

/// Chooses the similarity matrix by the pair's schema label.
Predictor make_cf_predictor(const std::map<SchemaId, SimilarityMatrix>& by_schema);

}  // namespace consor
