// Serial reference vs. OpenMP utility-matrix kernel, and exact vs. pruned
// selection, on synthetic ASR-like hypothesis sets.

#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "mbrkit/mbr.hpp"

using namespace mbrkit;

namespace {

WeightedHypothesisSet make_set(std::size_t n, std::uint32_t seed) {
  static const std::vector<std::string> vocab{"the", "a", "of", "man", "road", "walked", "down", "old", "into",
                                              "village", "slowly", "long", "quiet", "to", "and", "house"};
  std::mt19937 rng(seed);
  std::vector<std::string> base(20);
  for (auto& w : base) w = vocab[rng() % vocab.size()];
  HypothesisSet set;
  set.utterance_id = "bench";
  for (std::size_t k = 0; k < n; ++k) {
    std::string text;
    for (const auto& w : base) {
      if (rng() % 25 == 0) continue;
      text += (text.empty() ? "" : " ") + (rng() % 12 == 0 ? vocab[rng() % vocab.size()] : w);
    }
    // Distinct texts, so the matrix is n x n.
    text += " #" + std::to_string(k);
    set.hypotheses.push_back({text, {}, {}, {}});
  }
  return dedup_weight(set);
}

const Utility& bleu() {
  static const Utility u{UtilitySpec{}};
  return u;
}

void BM_MatrixSerialReference(benchmark::State& state) {
  const auto set = make_set(static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(reference::utility_matrix(set, bleu()));
  state.counters["evaluations"] = static_cast<double>(set.size() * set.size());
}

void BM_MatrixParallelKernel(benchmark::State& state) {
  const auto set = make_set(static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(utility_matrix(set, bleu()));
  state.counters["evaluations"] = static_cast<double>(set.size() * set.size());
}

void BM_SelectExact(benchmark::State& state) {
  const auto set = make_set(static_cast<std::size_t>(state.range(0)), 2);
  const auto weights = set.weights();
  for (auto _ : state) {
    const auto prepared = bleu().prepare(set);
    benchmark::DoNotOptimize(mbr_select(utility_matrix(prepared, "bench"), weights));
  }
  state.counters["evaluations"] = static_cast<double>(set.size() * set.size());
}

void BM_SelectPruned(benchmark::State& state) {
  const auto set = make_set(static_cast<std::size_t>(state.range(0)), 2);
  const auto weights = set.weights();
  std::uint64_t evaluations = 0;
  for (auto _ : state) {
    const auto prepared = bleu().prepare(set);
    const auto sel = mbr_select_pruned(prepared, weights, PruneSchedule::default_schedule(), 7);
    evaluations = sel.evaluations;
    benchmark::DoNotOptimize(sel);
  }
  state.counters["evaluations"] = static_cast<double>(evaluations);
}

}  // namespace

BENCHMARK(BM_MatrixSerialReference)->Arg(16)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_MatrixParallelKernel)->Arg(16)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_SelectExact)->Arg(16)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_SelectPruned)->Arg(16)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
