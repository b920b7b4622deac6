#include <gtest/gtest.h>

#include "mbrkit/error.hpp"
#include "mbrkit/rerank.hpp"

using namespace mbrkit;

namespace {

Hypothesis hyp(std::string text, double lp, std::int64_t tokens, double asr, double llm) {
  return {std::move(text), lp, tokens, {{"asr_score", asr}, {"llm_score", llm}}};
}

HypothesisSet sample_set() {
  return {"u",
          {hyp("a b c", -3.0, 3, -3.0, -10.0), hyp("a b", -2.5, 2, -2.5, -30.0), hyp("a b c d e f", -4.0, 6, -4.0, -5.0)},
          {}};
}

}  // namespace

TEST(Map, HighestLogProb) {
  const auto r = map_select(sample_set());
  EXPECT_EQ(r.chosen_index, 1u);
  EXPECT_EQ(r.chosen_text, "a b");
  EXPECT_DOUBLE_EQ(r.objective, -2.5);
}

TEST(Map, LengthNormalized) {
  const auto r = map_select(sample_set(), true);
  EXPECT_EQ(r.chosen_index, 2u);
  EXPECT_DOUBLE_EQ(r.objective, -4.0 / 6.0);
}

TEST(Map, TiesToLowestIndexAndMissingFields) {
  HypothesisSet s{"u", {{"x", -1.0, {}, {}}, {"y", -1.0, {}, {}}}, {}};
  EXPECT_EQ(map_select(s).chosen_index, 0u);
  EXPECT_THROW(map_select(s, true), ValidationError);
  s.hypotheses[1].log_prob.reset();
  EXPECT_THROW(map_select(s), ValidationError);
}

TEST(Beam, TakesFirstHypothesis) {
  EXPECT_EQ(beam_select(sample_set()).chosen_text, "a b c");
}

TEST(Weighted, ConvexAndSumForms) {
  WeightedScoreSpec spec;
  spec.alpha = 0.0;
  EXPECT_EQ(weighted_select(sample_set(), spec).chosen_index, 1u);
  spec.alpha = 1.0;
  EXPECT_EQ(weighted_select(sample_set(), spec).chosen_index, 2u);
  spec.alpha = 0.5;
  const auto r = weighted_select(sample_set(), spec);
  // 0.5 * asr + 0.5 * llm: -6.5, -16.25, -4.5
  EXPECT_EQ(r.chosen_index, 2u);
  EXPECT_DOUBLE_EQ(r.objective, -4.5);
  spec.form = FusionForm::sum;
  spec.alpha = 0.1;
  // asr + 0.1 * llm: -4.0, -5.5, -4.5
  EXPECT_EQ(weighted_select(sample_set(), spec).chosen_index, 0u);
}

TEST(Weighted, LengthNormalizedLlmScore) {
  WeightedScoreSpec spec;
  spec.alpha = 1.0;
  spec.length_normalize_llm = true;
  // -10/3, -15, -5/6
  EXPECT_EQ(weighted_select(sample_set(), spec).chosen_index, 2u);
}

TEST(Weighted, Validation) {
  WeightedScoreSpec spec;
  spec.alpha = 1.5;
  EXPECT_THROW(spec.validate(), ValidationError);
  spec.alpha = 0.5;
  spec.llm_key = "missing";
  EXPECT_THROW(weighted_select(sample_set(), spec), ValidationError);
}

TEST(Oracle, LowestErrorRate) {
  const Normalizer n(NormalizerSpec{});
  const auto r = oracle_select(sample_set(), "A B C D.", n, TokenUnit::word);
  EXPECT_EQ(r.chosen_index, 0u);
  EXPECT_DOUBLE_EQ(r.objective, 0.25);
  EXPECT_THROW(oracle_select(sample_set(), "...", n, TokenUnit::word), UndefinedError);
}
