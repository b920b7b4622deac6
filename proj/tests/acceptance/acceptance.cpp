// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mbrkit/audio.hpp"
#include "mbrkit/harness.hpp"
#include "mbrkit/log.hpp"
#include "mbrkit/metrics.hpp"
#include "mbrkit/mbr.hpp"
#include "mbrkit/rng.hpp"
#include "mbrkit/sampling.hpp"
#include "oracles/oracles.hpp"
#include "support.hpp"

using namespace mbrkit;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

Outcome bleu_oracle() {
  const auto fixture = nlohmann::json::parse(read_file(testutil::source_path("tests/data/bleu_fixture.json")));
  double worst = 0.0;
  std::size_t count = 0;
  for (const auto& s : fixture["sentences"]) {
    BleuConfig cfg;
    cfg.smoothing = parse_bleu_smoothing(s["smoothing"].get<std::string>());
    const double got = sentence_bleu(s["hyp"].get<std::string>(), s["refs"].get<std::vector<std::string>>(), cfg);
    worst = std::max(worst, std::abs(got - s["score"].get<double>()));
    ++count;
  }
  for (const auto& c : fixture["corpora"]) {
    std::vector<std::vector<std::string>> hyps;
    for (const auto& h : c["hyps"]) hyps.push_back(split_words(h.get<std::string>()));
    std::vector<std::vector<std::vector<std::string>>> streams;
    for (const auto& st : c["ref_streams"]) {
      streams.emplace_back();
      for (const auto& r : st) streams.back().push_back(split_words(r.get<std::string>()));
    }
    BleuConfig cfg;
    cfg.smoothing = parse_bleu_smoothing(c["smoothing"].get<std::string>());
    worst = std::max(worst, std::abs(corpus_bleu(hyps, streams, cfg) - c["score"].get<double>()));
    ++count;
  }
  return {count == 55 && worst < 1e-4, std::to_string(count) + " cases, max |diff| " + fmt("%.2e", worst)};
}

Outcome edit_distance_oracle() {
  std::mt19937 rng(1000);
  std::size_t agree = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<std::string> a(rng() % 9), b(rng() % 9);
    for (auto& x : a) x = std::string(1, static_cast<char>('a' + rng() % 4));
    for (auto& x : b) x = std::string(1, static_cast<char>('a' + rng() % 4));
    agree += edit_distance(a, b).distance == oracle::edit_distance_exhaustive(a, b);
  }
  return {agree == 1000, std::to_string(agree) + "/1000 pairs agree"};
}

Outcome mbr_exactness() {
  std::mt19937 rng(500);
  std::size_t agree = 0, ties = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng() % 16;
    std::vector<int> w(n, 1);
    // Spread the remaining mass so that N = sum(w) <= 64.
    const std::size_t total = n + rng() % (64 - n + 1);
    for (std::size_t k = n; k < total; ++k) ++w[rng() % n];
    const long long range = trial % 2 ? 3 : 101;  // few levels force ties
    std::vector<std::vector<long long>> u(n, std::vector<long long>(n));
    std::vector<std::vector<double>> rows(n, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) rows[i][j] = static_cast<double>(u[i][j] = static_cast<long long>(rng() % range));
    const auto sel = mbr_select(UtilityMatrix::from_rows(rows), w);
    agree += sel.index == oracle::mbr_expanded_argmax(u, w);
    std::size_t at_max = 0;
    for (double o : sel.objectives) at_max += o == sel.objectives[sel.index];
    ties += at_max > 1;
  }
  return {agree == 500 && ties > 0, std::to_string(agree) + "/500 agree, " + std::to_string(ties) + " tie cases"};
}

Outcome pruned_mbr() {
  const auto cfg = RunConfig::load(testutil::source_path("data/fixtures/en_sim/config.json"));
  const auto sets = load_hypothesis_sets(*cfg.hypotheses);
  UtilitySpec spec;
  spec.normalizer = cfg.normalizer;
  spec.unit = cfg.unit;
  const Utility utility(spec);
  const std::size_t n_samples = 64;
  std::size_t trials = 0, agree = 0, over_budget = 0;
  std::uint64_t pruned_evals = 0, exact_evals = 0;
  for (std::uint64_t s : {1ULL, 2ULL}) {
    for (const auto& full : sets) {
      if (full.size() < n_samples) continue;
      const auto weighted = dedup_weight(full.prefix(n_samples));
      const auto prepared = utility.prepare(weighted);
      const auto exact = mbr_select(utility_matrix(prepared, "exact"), weighted.weights());
      const auto pruned =
          mbr_select_pruned(prepared, weighted.weights(), PruneSchedule::default_schedule(), mix64(s ^ fnv1a64(full.utterance_id)));
      ++trials;
      agree += weighted.items[pruned.index].hypothesis.text == weighted.items[exact.index].hypothesis.text;
      over_budget += pruned.evaluations * 2 >= n_samples * n_samples;
      pruned_evals += pruned.evaluations;
      exact_evals += weighted.size() * weighted.size();
    }
  }
  const double rate = trials ? static_cast<double>(agree) / static_cast<double>(trials) : 0.0;
  return {trials == 200 && rate >= 0.95 && over_budget == 0,
          std::to_string(agree) + "/" + std::to_string(trials) + " agree (" + fmt("%.3f", rate) + "), max evaluations < N^2/2 in " +
              std::to_string(trials - over_budget) + " trials, pruned/exact distinct-pair ratio " +
              fmt("%.3f", static_cast<double>(pruned_evals) / static_cast<double>(exact_evals))};
}

Outcome convergence() {
  const auto cfg = RunConfig::load(testutil::source_path("data/models/simulate.json"));
  const auto model = SyntheticModel::load(*cfg.simulate.model);
  const Utility utility(cfg.simulate.utility);
  const auto table = simulate_regret(model, utility, cfg.simulate);
  std::string medians;
  double m4 = NAN, m64 = NAN;
  for (const auto& row : table.rows) {
    medians += (medians.empty() ? "" : " ") + fmt("%.2f", row.median);
    if (row.n == 4) m4 = row.median;
    if (row.n == 64) m64 = row.median;
  }
  const bool grid_ok = table.rows.size() == 7 && table.rows.front().regrets.size() == 200;
  return {grid_ok && table.inversions <= 1 && m64 < m4,
          "medians [" + medians + "], inversions " + std::to_string(table.inversions)};
}

Outcome snr_exactness() {
  std::mt19937 rng(100);
  std::uniform_real_distribution<double> amp(-1.0, 1.0), snr(-20.0, 40.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    AudioBuffer s, n;
    const std::size_t len = 100 + rng() % 16000;
    const double ns = 0.01 + 0.99 * (rng() % 1000) / 1000.0;
    for (std::size_t i = 0; i < len; ++i) {
      s.samples.push_back(0.5 * amp(rng));
      n.samples.push_back(ns * amp(rng));
    }
    const double target = snr(rng);
    const auto m = mix_at_snr(s, n, target);
    AudioBuffer scaled = n;
    for (auto& x : scaled.samples) x *= m.gain;
    worst = std::max(worst, std::abs(measured_snr_db(s, scaled) - target));
  }
  AudioBuffer s, n;
  std::mt19937 r2(0);
  for (int i = 0; i < 1000; ++i) {
    s.samples.push_back(0.5 * amp(r2));
    n.samples.push_back(-s.samples.back());
  }
  const double gain = mix_at_snr(s, n, 0.0).gain;
  return {worst < 1e-6 && gain == 1.0, "max |SNR error| " + fmt("%.2e", worst) + " dB, 0 dB gain " + fmt("%.17g", gain)};
}

Outcome sampler_statistics() {
  const auto model = SyntheticModel::parse("0.55\ta\n0.35\tb\n0.10\tc\n");
  const int draws = 10000;
  SamplerConfig eps{SamplingMethod::epsilon, 1.0, 0.2, 77, 1};
  const std::map<std::string, double> target{{"a", 0.55 / 0.9}, {"b", 0.35 / 0.9}, {"c", 0.0}};
  std::map<std::string, int> hist;
  for (int i = 0; i < draws; ++i) ++hist[sample_sequence(model, eps, static_cast<std::uint64_t>(i)).text];
  double worst_z = 0.0;
  bool ok = hist.size() <= 2;
  for (const auto& [text, p] : target) {
    const int got = hist.count(text) ? hist.at(text) : 0;
    if (p == 0.0) {
      ok = ok && got == 0;
      continue;
    }
    const double z = std::abs(got - p * draws) / std::sqrt(draws * p * (1 - p));
    worst_z = std::max(worst_z, z);
  }
  ok = ok && worst_z <= 3.0;

  const std::vector<double> base = model.conditional({});
  const bool identity = transform_distribution(base, 1.0, 0.0) == base;
  SamplerConfig neutral{SamplingMethod::epsilon, 1.0, 0.0, 78, 1};
  SamplerConfig ancestral{SamplingMethod::ancestral, 1.0, 0.0, 78, 1};
  bool same_draws = true;
  for (std::uint64_t i = 0; i < 1000; ++i)
    same_draws = same_draws && sample_sequence(model, neutral, i).tokens == sample_sequence(model, ancestral, i).tokens;
  return {ok && identity && same_draws,
          "max |z| " + fmt("%.2f", worst_z) + ", eps=0 T=1 identity " + (identity && same_draws ? "holds" : "broken")};
}

struct FixtureRun {
  std::string name;
  RunConfig cfg;
  EvalReport report;
};

std::vector<FixtureRun>& fixture_runs(const fs::path& scratch) {
  static std::vector<FixtureRun> runs;
  if (runs.empty()) {
    for (const char* name : {"en_sim", "ja_sim"}) {
      Overrides o;
      o.out = scratch / name;
      auto cfg = load_config(testutil::source_path(std::string("data/fixtures/") + name + "/config.json"), o);
      set_workers(cfg.workers);
      const auto decoded = run_decode(cfg);
      auto report = evaluate(cfg, decoded.results, load_manifest(*cfg.manifest));
      runs.push_back({name, std::move(cfg), std::move(report)});
    }
  }
  return runs;
}

Outcome oracle_dominance(const fs::path& scratch) {
  bool ok = true;
  std::string detail;
  for (const auto& run : fixture_runs(scratch)) {
    const double oracle = run.report.method("oracle").error_rate;
    double best_other = INFINITY;
    for (const auto& m : run.report.methods)
      if (m.method != "oracle") best_other = std::min(best_other, m.error_rate);
    ok = ok && oracle <= best_other;
    detail += (detail.empty() ? "" : "; ") + run.name + " oracle " + fmt("%.4f", oracle) + " vs best other " +
              fmt("%.4f", best_other);
  }
  return {ok, detail};
}

Outcome fixture_direction(const fs::path& scratch) {
  const auto& run = fixture_runs(scratch).front();
  const double map = run.report.method("map").error_rate;
  const double n4 = run.report.method("mbr_n4").error_rate;
  const double n64 = run.report.method("mbr_n64").error_rate;
  return {n64 < map && n64 <= n4,
          run.name + " WER map " + fmt("%.4f", map) + ", mbr_n4 " + fmt("%.4f", n4) + ", mbr_n64 " + fmt("%.4f", n64)};
}

Outcome correlation_sign(const fs::path& scratch) {
  bool ok = true;
  std::string detail;
  for (const auto& run : fixture_runs(scratch)) {
    const auto s = correlate(run.cfg, load_manifest(*run.cfg.manifest), load_hypothesis_sets(*run.cfg.hypotheses));
    ok = ok && s.mean_r < 0.0;
    detail += (detail.empty() ? "" : "; ") + run.name + " mean r " + fmt("%.4f", s.mean_r) + " over " +
              std::to_string(s.instances) + " instances";
  }
  return {ok, detail};
}

Outcome determinism(const fs::path& scratch) {
  std::vector<std::map<std::string, std::string>> outputs;
  for (int workers : {1, 3}) {
    Overrides o;
    o.workers = workers;
    o.out = scratch / ("det_w" + std::to_string(workers));
    const auto cfg = load_config(testutil::source_path("data/fixtures/en_sim/config.json"), o);
    std::ostringstream sink;
    auto* saved = std::cout.rdbuf(sink.rdbuf());
    const bool ok = cmd_decode(cfg) == kExitOk && cmd_evaluate(cfg) == kExitOk;
    std::cout.rdbuf(saved);
    if (!ok) return {false, "harness run failed"};
    std::map<std::string, std::string> files;
    for (const auto& e : fs::directory_iterator(cfg.output_dir))
      if (e.is_regular_file()) files[e.path().filename().string()] = read_file(e.path());
    outputs.push_back(std::move(files));
  }
  set_workers(1);
  const bool same = outputs[0] == outputs[1] && !outputs[0].empty();
  return {same, std::to_string(outputs[0].size()) + " output files compared, workers 1 vs 3"};
}

}  // namespace

int main() {
  set_warning_sink([](std::string_view) {});
  testutil::TempDir scratch;
  struct Criterion {
    const char* name;
    double budget_seconds;
    std::function<Outcome()> run;
  };
  const fs::path dir = scratch.path();
  const std::vector<Criterion> criteria{
      {"bleu-oracle-equivalence", 1.0, bleu_oracle},
      {"edit-distance-oracle", 5.0, edit_distance_oracle},
      {"mbr-exactness", 5.0, mbr_exactness},
      {"pruned-mbr-agreement", 30.0, pruned_mbr},
      {"convergence-median-regret", 120.0, convergence},
      {"snr-exactness", 5.0, snr_exactness},
      {"sampler-statistics", 0.0, sampler_statistics},
      {"oracle-dominance", 0.0, [&] { return oracle_dominance(dir); }},
      {"fixture-direction", 0.0, [&] { return fixture_direction(dir); }},
      {"correlation-sign", 0.0, [&] { return correlation_sign(dir); }},
      {"determinism", 0.0, [&] { return determinism(dir); }},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = c.budget_seconds <= 0.0 || secs < c.budget_seconds;
    if (!in_time) o.detail += ", over the " + fmt("%.0f", c.budget_seconds) + " s budget";
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::printf("%s %s: %s [%.3f s]\n", pass ? "PASS" : "FAIL", c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
