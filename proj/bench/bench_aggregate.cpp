// Parallel vs serial metric aggregation over synthetic annotation sets.
#include <map>
#include <random>

#include <benchmark/benchmark.h>

#include "../tests/annotation_gen.hpp"

namespace {

const std::vector<hmt::AnnotationRecord>& records(int samples) {
  static std::map<int, std::vector<hmt::AnnotationRecord>> cache;
  auto it = cache.find(samples);
  if (it == cache.end()) {
    std::mt19937_64 rng(99);
    it = cache.emplace(samples, hmt::test::random_annotations(rng, hmt::builtin_catalog(), samples)).first;
  }
  return it->second;
}

void BM_Parallel(benchmark::State& state) {
  const auto& r = records(static_cast<int>(state.range(0)));
  for (auto _ : state)
    benchmark::DoNotOptimize(hmt::aggregate_report(r, hmt::builtin_catalog(), {}));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(r.size()));
}

void BM_Serial(benchmark::State& state) {
  const auto& r = records(static_cast<int>(state.range(0)));
  for (auto _ : state)
    benchmark::DoNotOptimize(hmt::aggregate_report_serial(r, hmt::builtin_catalog(), {}));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(r.size()));
}

}  // namespace

BENCHMARK(BM_Parallel)->Arg(30)->Arg(300)->Arg(3000);
BENCHMARK(BM_Serial)->Arg(30)->Arg(300)->Arg(3000);

BENCHMARK_MAIN();
