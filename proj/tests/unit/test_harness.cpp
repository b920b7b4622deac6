#include <gtest/gtest.h>

#include <cmath>

#include "json.hpp"
#include "mbrkit/audio.hpp"
#include "mbrkit/error.hpp"
#include "mbrkit/harness.hpp"
#include "support.hpp"

using namespace mbrkit;
using nlohmann::json;

namespace {

Hypothesis hyp(std::string text, double lp) {
  return {std::move(text), lp, 4, {{"asr_score", lp}, {"llm_score", lp * 2}}};
}

// Three utterances; u3 has no hypothesis set.
struct SmallRun {
  testutil::TempDir dir;

  SmallRun() {
    save_manifest(dir / "manifest.tsv", {{"u1", {}, std::string("The cat sat on the mat."), "en"},
                                         {"u2", {}, std::string("a dog ran by"), "en"},
                                         {"u3", {}, std::string("hello world"), "en"}});
    std::vector<HypothesisSet> sets{
        {"u1",
         {hyp("the cat sat on a mat", -1.0), hyp("the cat sat on the mat", -1.5), hyp("the cat sat on the mat", -1.6),
          hyp("a cat sat on the mat", -2.0)},
         {}},
        {"u2", {hyp("a dog ran by", -0.5), hyp("a dog ran bye", -0.4), hyp("a dog ran by", -0.9), hyp("dog", -3.0)}, {}}};
    save_hypothesis_sets(dir / "samples.jsonl", sets);
  }

  json config() const {
    return {{"manifest", "manifest.tsv"},
            {"hypotheses", "samples.jsonl"},
            {"output_dir", "out"},
            {"seed", 3},
            {"methods",
             json::array({{{"name", "map"}, {"type", "map"}},
                          {{"name", "mbr_n1"}, {"type", "mbr"}, {"n", 1}},
                          {{"name", "mbr_all"}, {"type", "mbr"}},
                          {{"name", "oracle"}, {"type", "oracle"}}})}};
  }

  RunConfig load(const json& j) const {
    testutil::write_file(dir / "config.json", j.dump());
    return load_config(dir / "config.json", Overrides{});
  }
};

const DecodeResult& find(const std::vector<DecodeResult>& rs, const std::string& id, const std::string& label) {
  for (const auto& r : rs)
    if (r.utterance_id == id && r.label == label) return r;
  throw std::runtime_error("no result " + id + "/" + label);
}

}  // namespace

TEST(Config, UnknownKeysAndMissingPathsAreRejected) {
  SmallRun run;
  auto j = run.config();
  j["colour"] = 1;
  EXPECT_THROW(run.load(j), ValidationError);
  j = run.config();
  j["methods"][0]["beam"] = 3;
  EXPECT_THROW(run.load(j), ValidationError);
  j = run.config();
  j["hypotheses"] = "nope.jsonl";
  EXPECT_THROW(run.load(j), ValidationError);
  j = run.config();
  j["methods"].push_back({{"name", "map"}, {"type", "map"}});
  EXPECT_THROW(run.load(j), ValidationError);
}

TEST(Config, OverridesAndDigest) {
  SmallRun run;
  const auto a = run.load(run.config());
  Overrides o;
  o.methods = {"mbr_all"};
  o.n = 2;
  o.workers = 4;
  testutil::write_file(run.dir / "config.json", run.config().dump());
  const auto b = load_config(run.dir / "config.json", o);
  ASSERT_EQ(b.methods.size(), 1u);
  EXPECT_EQ(b.methods[0].n, 2u);
  EXPECT_NE(a.digest(), b.digest());
  Overrides w;
  w.workers = 4;
  EXPECT_EQ(a.digest(), load_config(run.dir / "config.json", w).digest());
  Overrides bad;
  bad.methods = {"greedy"};
  EXPECT_THROW(load_config(run.dir / "config.json", bad), ValidationError);
}

TEST(Decode, MethodsAndSkippedUtterances) {
  SmallRun run;
  const auto out = run_decode(run.load(run.config()));
  EXPECT_EQ(out.skipped, 1u);
  EXPECT_EQ(out.skipped_ids, std::vector<std::string>{"u3"});
  ASSERT_EQ(out.results.size(), 8u);
  EXPECT_EQ(find(out.results, "u1", "map").chosen_index, 0u);
  EXPECT_EQ(find(out.results, "u1", "mbr_n1").chosen_index, 0u);
  EXPECT_EQ(find(out.results, "u1", "mbr_all").chosen_text, "the cat sat on the mat");
  EXPECT_EQ(find(out.results, "u2", "mbr_all").chosen_index, 0u);
  EXPECT_EQ(find(out.results, "u2", "oracle").chosen_text, "a dog ran by");
}

TEST(Decode, SampleCountBeyondSetIsRejected) {
  SmallRun run;
  auto j = run.config();
  j["methods"][1]["n"] = 5;
  EXPECT_THROW(run_decode(run.load(j)), ValidationError);
}

TEST(Evaluate, OracleNeverWorseThanOtherMethods) {
  SmallRun run;
  const auto cfg = run.load(run.config());
  const auto report = evaluate(cfg, run_decode(cfg).results, load_manifest(*cfg.manifest));
  const double oracle = report.method("oracle").error_rate;
  for (const auto& m : report.methods) EXPECT_LE(oracle, m.error_rate) << m.method;
  for (const auto& row : report.rows) EXPECT_LE(row.error_rate >= 0.0, true);
}

TEST(Evaluate, ChoosingTheReferenceScoresPerfectly) {
  SmallRun run;
  testutil::write_file(run.dir / "emb.tsv", "The cat sat on the mat.\t1,2,3\na dog ran by\t0,1,0\n");
  auto j = run.config();
  j["embeddings"] = "emb.tsv";
  const auto cfg = run.load(j);
  std::vector<DecodeResult> rs(2);
  rs[0] = {"u1", DecodeMethod::oracle, "ref", 0, "The cat sat on the mat.", 0.0, {}, {}};
  rs[1] = {"u2", DecodeMethod::oracle, "ref", 0, "a dog ran by", 0.0, {}, {}};
  const auto report = evaluate(cfg, rs, load_manifest(*cfg.manifest));
  const auto& m = report.method("ref");
  EXPECT_EQ(m.utterances, 2u);
  EXPECT_EQ(m.error_rate, 0.0);
  EXPECT_DOUBLE_EQ(m.corpus_bleu, 100.0);
  ASSERT_TRUE(m.semdist);
  EXPECT_NEAR(*m.semdist, 0.0, 1e-12);
}

TEST(Evaluate, RejectsDuplicatesAndUnknownUtterances) {
  SmallRun run;
  const auto cfg = run.load(run.config());
  const auto manifest = load_manifest(*cfg.manifest);
  DecodeResult r{"u1", DecodeMethod::map, "map", 0, "x", 0.0, {}, {}};
  EXPECT_THROW(evaluate(cfg, {r, r}, manifest), ValidationError);
  r.utterance_id = "zz";
  EXPECT_THROW(evaluate(cfg, {r}, manifest), ValidationError);
}

TEST(Evaluate, BucketsPartitionRows) {
  EXPECT_EQ(length_bucket(0), "0");
  EXPECT_EQ(length_bucket(1), "(0, 5]");
  EXPECT_EQ(length_bucket(5), "(0, 5]");
  EXPECT_EQ(length_bucket(6), "(5, 10]");
  SmallRun run;
  const auto cfg = run.load(run.config());
  const auto report = evaluate(cfg, run_decode(cfg).results, load_manifest(*cfg.manifest));
  for (const auto& m : report.methods) {
    std::size_t total = 0;
    for (const auto& b : report.buckets)
      if (b.method == m.method) total += b.utterances;
    EXPECT_EQ(total, m.utterances);
  }
}

TEST(Correlate, PerfectAnticorrelationAndConstantErrorSkip) {
  SmallRun run;
  save_manifest(run.dir / "c.tsv", {{"a", {}, std::string("the cat sat on the mat"), "en"},
                                    {"b", {}, std::string("z"), "en"},
                                    {"c", {}, std::string("q"), "en"}});
  std::vector<HypothesisSet> sets{
      {"a", {hyp("the cat sat on the mat", -1), hyp("the cat sat on the mat", -1), hyp("dog", -1)}, {}},
      {"b", {hyp("x", -1), hyp("y", -1)}, {}}};
  const auto cfg = run.load(run.config());
  const auto s = correlate(cfg, load_manifest(run.dir / "c.tsv"), sets);
  EXPECT_EQ(s.instances, 1u);
  EXPECT_EQ(s.skipped, 1u);
  EXPECT_NEAR(s.mean_r, -1.0, 1e-12);
  EXPECT_TRUE(std::isnan(s.standard_error));
  EXPECT_THROW(correlate(cfg, load_manifest(run.dir / "c.tsv"), {sets[1]}), UndefinedError);
}

TEST(Determinism, ReportsIdenticalAcrossWorkerCounts) {
  const auto path = testutil::source_path("data/fixtures/ja_sim/config.json");
  testutil::TempDir dir;
  std::vector<std::string> reports;
  for (int workers : {1, 4}) {
    Overrides o;
    o.workers = workers;
    o.out = dir / ("w" + std::to_string(workers));
    const auto cfg = load_config(path, o);
    ASSERT_EQ(cmd_decode(cfg), kExitOk);
    ASSERT_EQ(cmd_evaluate(cfg), kExitOk);
    reports.push_back(read_file(cfg.output_dir / "decode.jsonl") + read_file(cfg.output_dir / "summary.tsv") +
                      read_file(cfg.output_dir / "rows.tsv"));
  }
  set_workers(1);
  EXPECT_EQ(reports[0], reports[1]);
}

TEST(Simulate, EnumerationHasZeroRegretAndSamplesNonnegative) {
  const auto model = SyntheticModel::parse(
      "0.3\tthe cat sat on the mat\n0.25\tthe cat sat on a mat\n0.2\ta cat sat on the mat\n"
      "0.15\tthe dog sat on the mat\n0.1\tthe cat sat\n");
  const Utility utility(UtilitySpec{});
  SimulateConfig sc;
  sc.seeds = 20;
  sc.n_grid = {1, 4, 16};
  sc.sampler.seed = 5;
  const auto table = simulate_regret(model, utility, sc);
  ASSERT_EQ(table.rows.size(), 3u);
  for (const auto& row : table.rows) {
    ASSERT_EQ(row.regrets.size(), 20u);
    for (double r : row.regrets) EXPECT_GE(r, -1e-9);
  }
  sc.enumerate = true;
  for (const auto& row : simulate_regret(model, utility, sc).rows)
    for (double r : row.regrets) EXPECT_NEAR(r, 0.0, 1e-9);
}

TEST(Bench, ReportsEveryRepetition) {
  SmallRun run;
  auto j = run.config();
  j["bench"] = {{"repetitions", 2}};
  const auto report = run_bench(run.load(j));
  ASSERT_EQ(report.rows.size(), 4u);
  for (const auto& row : report.rows) EXPECT_EQ(row.seconds_per_utterance.size(), 2u);
}

TEST(MixNoise, DeterministicWithFailuresListed) {
  testutil::TempDir dir;
  AudioBuffer speech, noise;
  for (int i = 0; i < 400; ++i) {
    speech.samples.push_back(0.3 * std::sin(i * 0.05));
    noise.samples.push_back(((i * 7919) % 200 - 100) / 1000.0);
  }
  write_wav(dir / "s.wav", speech);
  noise.samples.resize(150);
  write_wav(dir / "n.wav", noise);
  save_manifest(dir / "m.tsv", {{"a", std::string("s.wav"), std::string("x"), "en"},
                                {"b", std::string("gone.wav"), std::string("x"), "en"}});
  testutil::write_file(dir / "config.json",
                      json({{"manifest", "m.tsv"}, {"noise", {{"paths", {"n.wav"}}, {"snr_db", 5.0}}}}).dump());
  std::vector<std::string> bytes;
  for (const char* out : {"o1", "o2"}) {
    Overrides o;
    o.out = dir / out;
    const auto cfg = load_config(dir / "config.json", o);
    EXPECT_EQ(cmd_mix_noise(cfg), kExitPartial);
    const auto outcome = mix_noise(cfg);
    ASSERT_EQ(outcome.failures.size(), 1u);
    EXPECT_EQ(outcome.failures[0].first, "b");
    bytes.push_back(read_file(dir / out / "audio" / "a.wav"));
    EXPECT_NE(read_file(dir / out / "mix_failures.tsv").find("b\t"), std::string::npos);
  }
  EXPECT_EQ(bytes[0], bytes[1]);
}

TEST(MergeScores, AddsScoresAndReportsBadLines) {
  SmallRun run;
  auto sets = load_hypothesis_sets(run.dir / "samples.jsonl");
  testutil::write_file(run.dir / "s.tsv", "lm\tu1\t0\t-2.5\nlm\tu2\t3\t-1\n");
  merge_scores(sets, run.dir / "s.tsv");
  EXPECT_EQ(sets[0].hypotheses[0].external_scores.at("lm"), -2.5);
  EXPECT_EQ(sets[1].hypotheses[3].external_scores.at("lm"), -1.0);
  for (const char* bad : {"lm\tu9\t0\t1\n", "lm\tu1\t9\t1\n", "lm\tu1\t0\tinf\n", "lm\tu1\t0\n", "lm\tu1\t1\t1\nlm\tu1\t1\t2\n"}) {
    auto copy = load_hypothesis_sets(run.dir / "samples.jsonl");
    testutil::write_file(run.dir / "b.tsv", bad);
    EXPECT_THROW(merge_scores(copy, run.dir / "b.tsv"), ParseError) << bad;
  }
}
