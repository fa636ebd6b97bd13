#include "consor/baseline_cf.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <sstream>

#include <Eigen/Dense>

#include "consor/error.hpp"
#include "consor/rng.hpp"

namespace consor {

std::optional<std::size_t> SimilarityMatrix::index_of(std::string_view category) const {
  auto it = std::lower_bound(categories.begin(), categories.end(), category);
  if (it == categories.end() || *it != category) return std::nullopt;
  return static_cast<std::size_t>(it - categories.begin());
}

double SimilarityMatrix::similarity(std::string_view a, std::string_view b) const {
  if (a == b) return 1.0;
  auto i = index_of(a);
  auto j = index_of(b);
  if (!i || !j) return 0.0;
  return at(*i, *j);
}

std::string SimilarityMatrix::serialize() const {
  std::string out(to_string(schema));
  for (const auto& c : categories) out += "\t" + c;
  out += "\n";
  char buf[32];
  for (std::size_t i = 0; i < size(); ++i) {
    out += categories[i];
    for (std::size_t j = 0; j < size(); ++j) {
      std::snprintf(buf, sizeof buf, "\t%.17g", at(i, j));
      out += buf;
    }
    out += "\n";
  }
  return out;
}

SimilarityMatrix SimilarityMatrix::parse(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const auto tab = s.find('\t', start);
      cells.push_back(s.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    return cells;
  };
  if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, "similarity table is empty");
  auto header = split(line);
  SimilarityMatrix m;
  m.schema = parse_schema(header.front());
  m.categories.assign(header.begin() + 1, header.end());
  if (!std::is_sorted(m.categories.begin(), m.categories.end()))
    throw Error(ErrorCode::ParseError, "similarity header categories are not sorted");
  const std::size_t n = m.categories.size();
  m.values.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, "similarity table truncated at row " + std::to_string(i));
    auto cells = split(line);
    if (cells.size() != n + 1 || cells.front() != m.categories[i])
      throw Error(ErrorCode::ParseError, "similarity row " + std::to_string(i + 2) + " is malformed");
    for (std::size_t j = 0; j < n; ++j) {
      try {
        m.values[i * n + j] = std::stod(cells[j + 1]);
      } catch (const std::exception&) {
        throw Error(ErrorCode::ParseError, "bad value '" + cells[j + 1] + "' in similarity row " + std::to_string(i + 2));
      }
    }
  }
  return m;
}

SimilarityMatrix fit_pairwise_similarity(std::span<const ScenePair> train, SchemaId schema) {
  std::set<std::string> vocab;
  std::size_t slice = 0;
  for (const auto& pair : train) {
    if (pair.schema != schema) continue;
    ++slice;
    for (const auto& [cat, count] : pair.goal.category_counts()) vocab.insert(cat);
  }
  if (slice == 0) throw Error(ErrorCode::EmptySchemaSlice, "no training scenes for schema " + std::string(to_string(schema)));

  SimilarityMatrix m;
  m.schema = schema;
  m.categories.assign(vocab.begin(), vocab.end());
  const std::size_t n = m.size();
  std::vector<double> both(n * n, 0.0), shared(n * n, 0.0);
  for (const auto& pair : train) {
    if (pair.schema != schema) continue;
    std::vector<std::size_t> present;
    std::map<std::size_t, std::set<int>> containers;
    for (const auto& obj : pair.goal.real_objects()) {
      const std::size_t i = *m.index_of(obj.category);
      containers[i].insert(obj.receptacle.index);
    }
    for (const auto& [i, _] : containers) present.push_back(i);
    for (std::size_t a : present)
      for (std::size_t b : present) {
        if (a == b) continue;
        both[a * n + b] += 1.0;
        const auto& ca = containers[a];
        const auto& cb = containers[b];
        const bool meet = std::any_of(ca.begin(), ca.end(), [&](int c) { return cb.count(c) > 0; });
        if (meet) shared[a * n + b] += 1.0;
      }
  }
  m.values.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      m.values[i * n + j] = i == j ? 1.0 : (both[i * n + j] > 0 ? shared[i * n + j] / both[i * n + j] : 0.0);
  return m;
}

namespace {

std::vector<int> relabel_by_first_appearance(const std::vector<int>& labels) {
  std::map<int, int> remap;
  std::vector<int> out;
  out.reserve(labels.size());
  for (int l : labels) {
    auto [it, inserted] = remap.try_emplace(l, static_cast<int>(remap.size()));
    out.push_back(it->second);
  }
  return out;
}

double squared_distance(const Eigen::MatrixXd& x, Eigen::Index row, const Eigen::RowVectorXd& c) {
  return (x.row(row) - c).squaredNorm();
}

}  // namespace

Clustering spectral_cluster(const std::vector<double>& affinity, std::size_t n, int k, std::uint64_t seed) {
  if (k < 1) throw Error(ErrorCode::InvalidConfig, "cluster count must be >= 1");
  if (n == 0) throw Error(ErrorCode::InvalidConfig, "cannot cluster an empty matrix");
  if (affinity.size() != n * n) throw Error(ErrorCode::ShapeMismatch, "affinity is not n x n");
  Clustering result;
  result.labels.assign(n, 0);
  if (k == 1) return result;
  if (static_cast<std::size_t>(k) >= n) {
    for (std::size_t i = 0; i < n; ++i) result.labels[i] = static_cast<int>(i);
    return result;
  }

  bool connected = false;
  for (std::size_t i = 0; i < n && !connected; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j && affinity[i * n + j] != 0.0) {
        connected = true;
        break;
      }
  if (!connected) {
    result.degenerate = true;
    for (std::size_t i = 0; i < n; ++i) result.labels[i] = static_cast<int>(i % static_cast<std::size_t>(k));
    return result;
  }

  const auto nn = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd s(nn, nn);
  for (Eigen::Index i = 0; i < nn; ++i)
    for (Eigen::Index j = 0; j < nn; ++j) s(i, j) = affinity[static_cast<std::size_t>(i * nn + j)];
  Eigen::VectorXd inv_sqrt_deg(nn);
  for (Eigen::Index i = 0; i < nn; ++i) {
    const double d = s.row(i).sum();
    inv_sqrt_deg(i) = d > 0 ? 1.0 / std::sqrt(d) : 0.0;
  }
  const Eigen::MatrixXd lap =
      Eigen::MatrixXd::Identity(nn, nn) - inv_sqrt_deg.asDiagonal() * s * inv_sqrt_deg.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(lap);
  Eigen::MatrixXd u = eig.eigenvectors().leftCols(k);  // ascending eigenvalues
  for (Eigen::Index i = 0; i < nn; ++i) {
    const double norm = u.row(i).norm();
    if (norm > 1e-12) u.row(i) /= norm;
  }

  // Farthest-point initialisation.
  Rng rng(seed);
  std::vector<Eigen::Index> chosen{static_cast<Eigen::Index>(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng))};
  while (static_cast<int>(chosen.size()) < k) {
    Eigen::Index best = 0;
    double best_d = -1.0;
    for (Eigen::Index i = 0; i < nn; ++i) {
      double nearest = std::numeric_limits<double>::infinity();
      for (Eigen::Index c : chosen) nearest = std::min(nearest, squared_distance(u, i, u.row(c)));
      if (nearest > best_d + 1e-12) {
        best_d = nearest;
        best = i;
      }
    }
    chosen.push_back(best);
  }
  Eigen::MatrixXd centers(k, k);
  for (int c = 0; c < k; ++c) centers.row(c) = u.row(chosen[static_cast<std::size_t>(c)]);

  std::vector<int> labels(n, -1);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < nn; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = squared_distance(u, i, centers.row(c));
        if (d < best_d - 1e-12) {
          best_d = d;
          best = c;
        }
      }
      if (labels[static_cast<std::size_t>(i)] != best) {
        labels[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    if (!changed) break;
    for (int c = 0; c < k; ++c) {
      Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(k);
      int count = 0;
      for (Eigen::Index i = 0; i < nn; ++i)
        if (labels[static_cast<std::size_t>(i)] == c) {
          sum += u.row(i);
          ++count;
        }
      if (count > 0) centers.row(c) = sum / count;  // empty clusters keep their centre
    }
  }
  result.labels = relabel_by_first_appearance(labels);
  return result;
}

SceneState predict_cf(const SceneState& initial, const SimilarityMatrix& sim) {
  const int k = initial.n_containers();
  if (k < 1) throw Error(ErrorCode::NoContainers, "scene has no containers");
  const auto counts = initial.category_counts();
  std::vector<std::string> cats;
  for (const auto& [c, _] : counts) cats.push_back(c);
  if (cats.empty()) return initial;

  const std::size_t n = cats.size();
  std::vector<double> affinity(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) affinity[i * n + j] = sim.similarity(cats[i], cats[j]);
  const Clustering clusters = spectral_cluster(affinity, n, k);

  std::map<std::string, int, std::less<>> cluster_of;
  for (std::size_t i = 0; i < n; ++i) cluster_of[cats[i]] = clusters.labels[i];

  const auto ku = static_cast<std::size_t>(k);
  std::vector<std::vector<double>> agreement(ku, std::vector<double>(ku, 0.0));
  bool evidence = false;
  for (const auto& obj : initial.real_objects()) {
    if (obj.receptacle.is_surface()) continue;
    agreement[static_cast<std::size_t>(cluster_of[obj.category])][static_cast<std::size_t>(obj.receptacle.index)] += 1.0;
    evidence = true;
  }
  std::vector<int> container_of(ku);
  if (evidence) {
    container_of = max_weight_assignment(agreement);
  } else {
    for (std::size_t c = 0; c < ku; ++c) container_of[c] = static_cast<int>(c);
  }

  SceneState state = initial;
  for (const auto& obj : initial.surface_objects()) {
    const int dest = container_of[static_cast<std::size_t>(cluster_of[obj.category])];
    state = move_object(state, obj.category, obj.instance_index, ReceptacleId::container(dest));
  }
  return state;
}

Predictor make_cf_predictor(const std::map<SchemaId, SimilarityMatrix>& by_schema) {
  return [&by_schema](const ScenePair& pair) {
    auto it = by_schema.find(pair.schema);
    if (it == by_schema.end())
      throw Error(ErrorCode::EmptySchemaSlice, "no similarity fitted for schema " + std::string(to_string(pair.schema)));
    return predict_cf(pair.initial, it->second);
  };
}

}  // namespace consor
