#include <benchmark/benchmark.h>

#include <vector>

#include "consor/encoder.hpp"
#include "consor/kernels.hpp"

using namespace consor;

namespace {

std::vector<double> filled(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = uniform_real(rng, -1, 1);
  return v;
}

template <auto Kernel>
void BM_gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = filled(n * n, 1), b = filled(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    Kernel(false, false, n, n, n, a.data(), b.data(), c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(2 * n * n * n));
}

void BM_encode(benchmark::State& state) {
  static const EmbeddingTable table = EmbeddingTable::load(default_data_dir() / "embeddings" / "objects-50d.txt");
  TokenEncoder te;
  te.table = &table;
  const EncoderConfig cfg;
  const auto params = EncoderParams::initialize(cfg, te.token_dim(), 1);
  GenerationConfig g;
  g.train_per_schema = 1;
  g.val_per_schema = 1;
  g.test_per_schema = 4;
  g.test_unseen_per_schema = 1;
  const auto d = generate_dataset(g, GroupingTables::load(default_data_dir() / "groupings"));
  std::vector<SceneTokens> tokens;
  for (const auto& p : d.test_seen) tokens.push_back(encode_scene(p.initial, te));
  for (auto _ : state)
    for (const auto& t : tokens) benchmark::DoNotOptimize(encode(t, params, cfg).data.data());
  state.SetItemsProcessed(state.iterations() * static_cast<long>(tokens.size()));
}

}  // namespace

BENCHMARK(BM_gemm<kernels::gemm_serial>)->Name("gemm_serial")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_gemm<kernels::gemm_omp>)->Name("gemm_omp")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_encode);

BENCHMARK_MAIN();
