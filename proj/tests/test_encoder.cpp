#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <numeric>

#include "consor/digest.hpp"
#include "consor/encoder.hpp"
#include "consor/error.hpp"
#include "consor/gradcheck.hpp"

using namespace consor;
namespace fs = std::filesystem;

namespace {

const EmbeddingTable& table() {
  static const EmbeddingTable t = EmbeddingTable::load(default_data_dir() / "embeddings" / "objects-50d.txt");
  return t;
}

TokenEncoder token_encoder() {
  TokenEncoder te;
  te.table = &table();
  return te;
}

EncoderConfig tiny_config() {
  EncoderConfig c;
  c.model_dim = 16;
  c.n_heads = 4;
  c.feedforward_dim = 32;
  c.latent_dim = 8;
  return c;
}

ObjectInstance obj(std::string cat, ReceptacleId r, int i = 0) { return {std::move(cat), r, i, false}; }
ReceptacleId C(int k) { return ReceptacleId::container(k); }
const ReceptacleId T = ReceptacleId::surface();

ScenePair toy_pair() {
  // 2 containers, 4 objects: bowl+cup belong in C0, pen+book in C1.
  ScenePair p;
  p.scene_id = "toy";
  p.schema = SchemaId::Class;
  p.goal = SceneState::with_nulls(2, {obj("bowl", C(0)), obj("cup", C(0)), obj("pen", C(1)), obj("book", C(1))});
  p.initial = SceneState::with_nulls(2, {obj("bowl", C(0)), obj("cup", T), obj("pen", C(1)), obj("book", T)});
  return p;
}

Dataset small_dataset(int train = 12) {
  GenerationConfig g;
  g.train_per_schema = train;
  g.val_per_schema = 3;
  g.test_per_schema = 3;
  g.test_unseen_per_schema = 2;
  return generate_dataset(g, GroupingTables::load(default_data_dir() / "groupings"));
}

LatentScene hand_latents(int n_containers, std::vector<ObjectInstance> order, std::vector<std::vector<double>> rows) {
  LatentScene l;
  l.order = std::move(order);
  l.dim = static_cast<int>(rows.front().size());
  for (auto& r : rows) l.data.insert(l.data.end(), r.begin(), r.end());
  (void)n_containers;
  return l;
}

LatentScene random_latents(Rng& rng, int n_containers, int n_surface, int dim) {
  LatentScene l;
  l.dim = dim;
  for (int c = 0; c < n_containers; ++c)
    for (int k = 0; k < uniform_int(rng, 1, 3); ++k) l.order.push_back(obj("a", C(c), static_cast<int>(l.order.size())));
  for (int s = 0; s < n_surface; ++s) l.order.push_back(obj("b", T, s));
  for (std::size_t i = 0; i < l.order.size(); ++i) {
    std::vector<double> v(static_cast<std::size_t>(dim));
    double norm = 0.0;
    for (auto& x : v) {
      x = uniform_real(rng, -1, 1);
      norm += x * x;
    }
    for (auto& x : v) l.data.push_back(x / std::sqrt(norm));
  }
  return l;
}

double dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
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

// Cyclic Jacobi eigenvalues of a small symmetric matrix, descending.
std::vector<double> jacobi_eigenvalues(std::vector<std::vector<double>> a) {
  const std::size_t n = a.size();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1));
        const double c = 1 / std::sqrt(t * t + 1), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
      }
  }
  std::vector<double> ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = a[i][i];
  std::sort(ev.rbegin(), ev.rend());
  return ev;
}

}  // namespace

TEST_CASE("config validation and json") {
  EncoderConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.n_layers == 3);
  CHECK(c.dropout_rate == 0.5);
  CHECK(c.learning_rate == 1e-3);
  CHECK(c.batch_size == 64);
  CHECK(c.max_epochs == 30);
  c.n_heads = 5;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::InvalidConfig);
  c = EncoderConfig{};
  c.dropout_rate = 1.0;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::InvalidConfig);
  c = EncoderConfig{};
  c.margin = 0.0;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::InvalidConfig);
  c = tiny_config();
  c.placement = PlacementMode::Sequential;
  CHECK(EncoderConfig::from_json(c.to_json()) == c);
  CHECK(c.to_json()["early_stopping_metric"] == "val_success_rate");
}

TEST_CASE("encoder output is unit norm and deterministic in eval mode") {
  const auto te = token_encoder();
  const auto cfg = EncoderConfig{};
  const auto params = EncoderParams::initialize(cfg, te.token_dim(), 1);
  const auto tokens = encode_scene(toy_pair().initial, te);
  const auto a = encode(tokens, params, cfg);
  const auto b = encode(tokens, params, cfg);
  CHECK(a.data == b.data);
  CHECK(a.dim == 32);
  for (std::size_t i = 0; i < a.count(); ++i) {
    double n = 0.0;
    for (double v : a.row(i)) n += v * v;
    CHECK(std::abs(std::sqrt(n) - 1.0) < 1e-6);
  }
  // Train mode draws dropout masks.
  CHECK(encode(tokens, params, cfg, ad::Mode::Train, 3).data != a.data);
  CHECK(encode(tokens, params, cfg, ad::Mode::Train, 3).data == encode(tokens, params, cfg, ad::Mode::Train, 3).data);

  SceneTokens bad = tokens;
  bad.dim -= 1;
  bad.data.resize(bad.count() * static_cast<std::size_t>(bad.dim));
  CHECK(code_of([&] { encode(bad, params, cfg); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("swapping two tokens swaps their latents") {
  const auto te = token_encoder();
  const auto cfg = tiny_config();
  const auto params = EncoderParams::initialize(cfg, te.token_dim(), 2);
  const auto tokens = encode_scene(toy_pair().initial, te);
  SceneTokens swapped = tokens;
  const std::size_t i = 0, j = 3, d = static_cast<std::size_t>(tokens.dim);
  std::swap(swapped.order[i], swapped.order[j]);
  std::swap_ranges(swapped.data.begin() + static_cast<long>(i * d), swapped.data.begin() + static_cast<long>((i + 1) * d),
                   swapped.data.begin() + static_cast<long>(j * d));
  const auto a = encode(tokens, params, cfg);
  const auto b = encode(swapped, params, cfg);
  for (std::size_t k = 0; k < a.count(); ++k) {
    const std::size_t m = k == i ? j : k == j ? i : k;
    for (std::size_t x = 0; x < static_cast<std::size_t>(a.dim); ++x)
      CHECK(std::abs(a.row(k)[x] - b.row(m)[x]) < 1e-12);
  }
}

TEST_CASE("parameter layout") {
  auto cfg = EncoderConfig{};
  auto p = EncoderParams::initialize(cfg, 82, 5);
  CHECK(p.layers.size() == 3);
  CHECK(p.token_dim() == 82);
  CHECK(p.input_w.value.shape() == ad::Shape{82, 128});
  CHECK(p.output_w.value.shape() == ad::Shape{128, 32});
  const double bound = 1.0 / std::sqrt(82.0);
  for (double v : p.input_w.value.vec()) CHECK(std::abs(v) <= bound);
  for (double v : p.input_b.value.vec()) CHECK(v == 0.0);
  for (double v : p.layers[0].norm1_gain.value.vec()) CHECK(v == 1.0);
  std::size_t total = 0;
  std::set<std::string> names;
  for (const auto* q : std::as_const(p).all()) {
    total += q->value.size();
    CHECK(names.insert(q->name).second);
  }
  CHECK(total == p.parameter_count());
  CHECK(EncoderParams::initialize(cfg, 82, 5) == p);
  CHECK_FALSE(EncoderParams::initialize(cfg, 82, 6) == p);
}

TEST_CASE("goal labels and triplet mining") {
  const auto pair = toy_pair();
  const auto order = pair.initial.objects();
  const auto goal = goal_containers(pair, order);
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto* g = pair.goal.find(order[i].category, order[i].instance_index);
    CHECK(goal[i] == g->receptacle.index);
  }

  Rng rng(1);
  // {x1, x2} share a container, {y1} is elsewhere.
  auto t = mine_triplets(std::vector<int>{0, 0, 1}, 256, rng);
  CHECK(t == std::vector<Triplet>{{0, 1, 2}, {1, 0, 2}});
  CHECK(mine_triplets(std::vector<int>{0, 0, 0}, 256, rng).empty());

  const std::vector<int> big{0, 0, 0, 0, 1, 1, 1, 2, 2, 2, 2, 2};
  auto all = mine_triplets(big, 100000, rng);
  std::size_t expect = 0;
  for (std::size_t a = 0; a < big.size(); ++a)
    for (std::size_t p = 0; p < big.size(); ++p)
      for (std::size_t n = 0; n < big.size(); ++n) expect += (a != p && big[a] == big[p] && big[n] != big[a]) ? 1 : 0;
  CHECK(all.size() == expect);
  auto some = mine_triplets(big, 50, rng);
  CHECK(some.size() == 50);
  for (const auto& x : some) CHECK(std::find(all.begin(), all.end(), x) != all.end());
  CHECK(std::is_sorted(some.begin(), some.end(), [](const Triplet& a, const Triplet& b) {
    return std::tie(a.anchor, a.positive, a.negative) < std::tie(b.anchor, b.positive, b.negative);
  }));
}

TEST_CASE("triplet budget holds over a generated epoch") {
  const auto d = small_dataset(25);
  const auto te = token_encoder();
  const auto cfg = tiny_config();
  const auto params = EncoderParams::initialize(cfg, te.token_dim(), 1);
  Rng rng(4);
  for (const auto& p : d.train) {
    const auto latents = encode(encode_scene(p.initial, te), params, cfg);
    const auto t = mine_triplets(p, latents, 256, rng);
    CHECK(t.size() <= 256);
    const auto goal = goal_containers(p, latents);
    for (const auto& x : t) {
      CHECK(goal[x.anchor] == goal[x.positive]);
      CHECK(goal[x.anchor] != goal[x.negative]);
      CHECK(x.anchor != x.positive);
    }
  }
}

TEST_CASE("latent-matched labels stay a valid goal") {
  const auto d = small_dataset(25);
  const auto te = token_encoder();
  const auto cfg = tiny_config();
  const auto params = EncoderParams::initialize(cfg, te.token_dim(), 9);
  for (const auto& p : d.train) {
    const auto latents = encode(encode_scene(p.initial, te), params, cfg);
    const auto goal = goal_containers(p, latents);
    SceneState s = p.initial;
    for (std::size_t i = 0; i < latents.count(); ++i)
      if (latents.order[i].receptacle.is_surface())
        s = move_object(s, latents.order[i].category, latents.order[i].instance_index, C(goal[i]));
    CHECK(scene_edit_distance(s, p.goal) == 0);
  }
}

TEST_CASE("triplet loss") {
  ad::Tape tape;
  SUBCASE("satisfied and tied triples") {
    auto l = tape.constant(ad::Tensor({3, 2}, {1, 0, 1, 0, 0, 1}));
    auto loss = triplet_margin_loss(l, {{0, 1, 2}}, 0.5);
    CHECK(loss.value()[0] == 0.0);
    auto tie = tape.constant(ad::Tensor({3, 2}, {1, 0, 0, 1, 0, 1}));
    CHECK(triplet_margin_loss(tie, {{0, 1, 2}}, 0.5).value()[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(triplet_margin_loss(tie, {}, 0.5).value()[0] == 0.0);
  }
  SUBCASE("scalar loop oracle") {
    Rng rng(3);
    auto lat = random_latents(rng, 3, 4, 6);
    auto l = tape.constant(ad::Tensor({lat.count(), 6}, lat.data));
    std::vector<Triplet> ts;
    for (int i = 0; i < 40; ++i)
      ts.push_back({static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(lat.count()) - 1)),
                    static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(lat.count()) - 1)),
                    static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(lat.count()) - 1))});
    double oracle = 0.0;
    for (const auto& t : ts)
      oracle += std::max(0.0, dist(lat.row(t.anchor), lat.row(t.positive)) - dist(lat.row(t.anchor), lat.row(t.negative)) + 0.5);
    oracle /= static_cast<double>(ts.size());
    CHECK(std::abs(triplet_margin_loss(l, ts, 0.5).value()[0] - oracle) < 1e-12);
  }
  SUBCASE("perfect clusters cost nothing") {
    auto l = tape.constant(ad::Tensor({4, 2}, {1, 0, 1, 0, 0, 1, 0, 1}));
    Rng rng(1);
    CHECK(triplet_margin_loss(l, mine_triplets(std::vector<int>{0, 0, 1, 1}, 256, rng), 0.5).value()[0] == 0.0);
  }
}

TEST_CASE("full loss gradient on toy scenes") {
  // h = 1e-5 keeps truncation error below the floor; the 1e-6 floor keeps
  // near-zero components from being judged on roundoff.
  const auto te = token_encoder();
  auto cfg = tiny_config();
  for (double rate : {0.0, 0.5}) {
    cfg.dropout_rate = rate;
    auto params = EncoderParams::initialize(cfg, te.token_dim(), 11);
    const auto pair = toy_pair();
    const auto tokens = encode_scene(pair.initial, te);
    auto loss_fn = [&](ad::Tape& tape) {
      Rng drop(5);  // same mask on every evaluation
      auto out = encode_on_tape(tape, tokens, params, cfg, ad::Mode::Train, drop);
      LatentScene l{tokens.order, cfg.latent_dim, out.value().vec()};
      Rng mine(6);
      return triplet_margin_loss(out, mine_triplets(pair, l, 256, mine), cfg.margin);
    };
    auto plist = params.all();
    auto res = ad::finite_difference_check(loss_fn, plist, 1e-5, 1e-6);
    INFO("dropout " << rate << " worst " << res.worst);
    CHECK(res.max_relative_error < 1e-4);
  }

  // Two tokens, one per container.
  ScenePair two;
  two.goal = SceneState::with_nulls(2, {obj("bowl", C(0)), obj("pen", C(1))});
  two.initial = two.goal;
  const auto tokens = encode_scene(two.initial, te);
  cfg.dropout_rate = 0.0;
  auto params = EncoderParams::initialize(cfg, te.token_dim(), 12);
  auto plist = params.all();
  auto res = ad::finite_difference_check(
      [&](ad::Tape& tape) {
        Rng r(1);
        auto out = encode_on_tape(tape, tokens, params, cfg, ad::Mode::Train, r);
        return ad::sum(ad::mul(ad::gather_rows(out, {0}), ad::gather_rows(out, {1})));
      },
      plist, 1e-5, 1e-6);
  CHECK(res.max_relative_error < 1e-4);
}

TEST_CASE("centroid assignment") {
  SUBCASE("hand-set latents") {
    auto l = hand_latents(2, {obj("x", T), obj("a", C(0)), obj("b", C(1))}, {{1, 0}, {1, 0}, {0, 1}});
    auto a = assign_by_centroid(l, 2);
    CHECK(a.at({"x", 0}) == C(0));
    auto tie = hand_latents(2, {obj("x", T), obj("a", C(0)), obj("b", C(1))}, {{0, 1}, {1, 0}, {-1, 0}});
    CHECK(assign_by_centroid(tie, 2).at({"x", 0}) == C(0));
    auto single = hand_latents(1, {obj("x", T), obj("y", T), obj("a", C(0))}, {{0, 1}, {1, 0}, {-1, 0}});
    for (const auto& [k, r] : assign_by_centroid(single, 1)) CHECK(r == C(0));
    CHECK(code_of([&] { assign_by_centroid(single, 0); }) == ErrorCode::NoContainers);
  }
  SUBCASE("brute-force argmax, cosine and scale invariance") {
    Rng rng(17);
    for (int trial = 0; trial < 200; ++trial) {
      const int k = uniform_int(rng, 1, 4);
      auto l = random_latents(rng, k, uniform_int(rng, 1, 4), 5);
      auto got = assign_by_centroid(l, k);
      auto centroids = container_centroids(l, k);
      // Raw (unnormalized) sums, for the cosine form.
      std::vector<std::vector<double>> sums(static_cast<std::size_t>(k), std::vector<double>(5, 0.0));
      for (std::size_t i = 0; i < l.count(); ++i)
        if (!l.order[i].receptacle.is_surface())
          for (std::size_t x = 0; x < 5; ++x) sums[static_cast<std::size_t>(l.order[i].receptacle.index)][x] += l.row(i)[x];
      for (std::size_t i = 0; i < l.count(); ++i) {
        if (!l.order[i].receptacle.is_surface()) continue;
        int best = 0, best_cos = 0, best_scaled = 0;
        double bv = -1e300, bc = -1e300, bs = -1e300;
        for (int c = 0; c < k; ++c) {
          double dot = 0.0, cs = 0.0, nrm = 0.0, sc = 0.0;
          for (std::size_t x = 0; x < 5; ++x) {
            dot += l.row(i)[x] * centroids[static_cast<std::size_t>(c)][x];
            cs += l.row(i)[x] * sums[static_cast<std::size_t>(c)][x];
            nrm += sums[static_cast<std::size_t>(c)][x] * sums[static_cast<std::size_t>(c)][x];
            sc += l.row(i)[x] * 7.5 * centroids[static_cast<std::size_t>(c)][x];
          }
          const double cosine = cs / std::sqrt(nrm);
          if (dot > bv) { bv = dot; best = c; }
          if (cosine > bc) { bc = cosine; best_cos = c; }
          if (sc > bs) { bs = sc; best_scaled = c; }
        }
        const auto r = got.at({l.order[i].category, l.order[i].instance_index});
        CHECK(r.index == best);
        CHECK(r.index == best_cos);
        CHECK(r.index == best_scaled);
      }
    }
  }
}

TEST_CASE("predictions are valid completed states") {
  const auto d = small_dataset();
  const auto te = token_encoder();
  auto cfg = tiny_config();
  const auto params = EncoderParams::initialize(cfg, te.token_dim(), 4);
  for (PlacementMode mode : {PlacementMode::OneShot, PlacementMode::Sequential}) {
    cfg.placement = mode;
    for (const auto& p : d.test_seen) {
      auto r = predict_placements(p.initial, params, cfg, te);
      CHECK(validate_state(r.predicted_goal).empty());
      CHECK(r.predicted_goal.count_on_surface() == 0);
      CHECK(r.assignments.size() == p.initial.surface_objects().size());
      CHECK(r.predicted_goal.category_counts() == p.initial.category_counts());
    }
  }
}

TEST_CASE("training") {
  const auto d = small_dataset();
  const auto te = token_encoder();
  auto cfg = tiny_config();
  cfg.batch_size = 8;

  SUBCASE("zero epochs returns the initialization") {
    cfg.max_epochs = 0;
    auto r = train(d.train, d.val, te, cfg);
    CHECK(r.log.empty());
    CHECK(r.best_epoch == 0);
    CHECK(r.params == EncoderParams::initialize(cfg, te.token_dim(), derive_seed(cfg.rng_seed, "init")));
  }
  SUBCASE("deterministic, worker-independent and label-blind") {
    cfg.max_epochs = 2;
    auto a = train(d.train, d.val, te, cfg);
    auto b = train(d.train, d.val, te, cfg, {2, {}});
    REQUIRE(a.log.size() == 2);
    CHECK(a.params == b.params);
    for (std::size_t i = 0; i < a.log.size(); ++i) {
      CHECK(a.log[i].mean_loss == b.log[i].mean_loss);
      CHECK(a.log[i].val_success_rate == b.log[i].val_success_rate);
      CHECK(a.log[i].triplets == b.log[i].triplets);
    }
    auto relabel = [](std::vector<ScenePair> split, std::uint64_t seed) {
      Rng rng(seed);
      for (auto& p : split) p.schema = kAllSchemas[static_cast<std::size_t>(uniform_int(rng, 0, 3))];
      return split;
    };
    auto c = train(relabel(d.train, 1), relabel(d.val, 2), te, cfg);
    CHECK(c.params == a.params);
    CHECK(c.log[1].mean_loss == a.log[1].mean_loss);

    cfg.augment_container_permutation = true;
    auto e = train(d.train, d.val, te, cfg);
    CHECK(e.params == train(d.train, d.val, te, cfg).params);
  }
  SUBCASE("loss goes down") {
    cfg.max_epochs = 6;
    cfg.dropout_rate = 0.0;
    auto r = train(d.train, d.val, te, cfg);
    CHECK(r.log.back().mean_loss < r.log.front().mean_loss);
  }
  SUBCASE("errors") {
    CHECK(code_of([&] { train({}, d.val, te, cfg); }) == ErrorCode::EmptyDataset);
  }
}

TEST_CASE("projection") {
  SUBCASE("variance matches an eigendecomposition") {
    Rng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t n = 9, dim = 4;
      std::vector<std::vector<double>> rows(n, std::vector<double>(dim));
      for (auto& r : rows)
        for (std::size_t j = 0; j < dim; ++j) r[j] = uniform_real(rng, -1, 1) * static_cast<double>(j + 1);
      std::vector<double> mean(dim, 0.0);
      for (const auto& r : rows)
        for (std::size_t j = 0; j < dim; ++j) mean[j] += r[j] / static_cast<double>(n);
      std::vector<std::vector<double>> cov(dim, std::vector<double>(dim, 0.0));
      for (const auto& r : rows)
        for (std::size_t a = 0; a < dim; ++a)
          for (std::size_t b = 0; b < dim; ++b) cov[a][b] += (r[a] - mean[a]) * (r[b] - mean[b]) / static_cast<double>(n);
      const auto ev = jacobi_eigenvalues(cov);
      const auto p = pca_project(rows);
      CHECK(p.variance[0] == doctest::Approx(ev[0]).epsilon(1e-9));
      CHECK(p.variance[1] == doctest::Approx(ev[1]).epsilon(1e-9));
      CHECK(p.variance[0] >= p.variance[1]);
      // Captured variance measured from the coordinates themselves.
      for (int c = 0; c < 2; ++c) {
        double m = 0.0, v = 0.0;
        for (const auto& xy : p.coords) m += xy[static_cast<std::size_t>(c)] / static_cast<double>(n);
        for (const auto& xy : p.coords) v += std::pow(xy[static_cast<std::size_t>(c)] - m, 2) / static_cast<double>(n);
        CHECK(v == doctest::Approx(ev[static_cast<std::size_t>(c)]).epsilon(1e-9));
      }
    }
  }
  SUBCASE("identical rows") {
    auto p = pca_project(std::vector<std::vector<double>>(5, {0.3, -0.2, 0.9}));
    for (const auto& xy : p.coords) CHECK(xy == p.coords.front());
  }
  SUBCASE("export covers every token") {
    const auto te = token_encoder();
    const auto cfg = tiny_config();
    const auto params = EncoderParams::initialize(cfg, te.token_dim(), 4);
    const auto pair = toy_pair();
    auto rows = export_latents(pair.initial, params, cfg, te);
    CHECK(rows.size() == pair.initial.size());
    auto again = export_latents(pair.initial, params, cfg, te);
    for (std::size_t i = 0; i < rows.size(); ++i) CHECK(rows[i].projection == again[i].projection);
  }
}

TEST_CASE("checkpoints") {
  const fs::path dir = fs::temp_directory_path() / "consor_test_ckpt";
  fs::remove_all(dir);
  const auto cfg = tiny_config();
  const auto params = EncoderParams::initialize(cfg, 82, 3);
  CheckpointInfo info;
  info.config = cfg;
  info.token_dim = 82;
  info.dataset_digest = "d";
  info.embedding_digest = "e";
  info = save_checkpoint(dir, params, info);
  CHECK(info.archive_digest == sha256_file(dir / "checkpoint.bin"));
  CheckpointInfo loaded;
  auto back = load_checkpoint(dir, &loaded);
  CHECK(back == params);
  CHECK(loaded.config == cfg);
  CHECK(loaded.dataset_digest == "d");
  CHECK(loaded.names == info.names);
  CHECK(loaded.names.front() == "input.w");

  const std::string bin = read_file(dir / "checkpoint.bin");
  const fs::path again = dir / "again";
  save_checkpoint(again, back, info);
  CHECK(read_file(again / "checkpoint.bin") == bin);
  CHECK(read_file(again / "checkpoint.json") == read_file(dir / "checkpoint.json"));

  std::string tampered = bin;
  tampered[tampered.size() - 1] ^= 1;
  write_file(dir / "checkpoint.bin", tampered);
  CHECK(code_of([&] { load_checkpoint(dir); }) == ErrorCode::ArtifactMismatch);
  fs::remove_all(dir);
}
