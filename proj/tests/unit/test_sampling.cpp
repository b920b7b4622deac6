#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "mbrkit/error.hpp"
#include "mbrkit/metrics.hpp"
#include "mbrkit/sampling.hpp"
#include "support.hpp"

using namespace mbrkit;

namespace {

const char* kThreeWay = "0.5\ta\n0.3\tb\n0.2\tc\n";

std::map<std::string, int> histogram(const SyntheticModel& m, const SamplerConfig& cfg, int draws) {
  std::map<std::string, int> h;
  for (int i = 0; i < draws; ++i) ++h[sample_sequence(m, cfg, static_cast<std::uint64_t>(i)).text];
  return h;
}

void expect_within_three_sigma(const std::map<std::string, int>& h, const std::map<std::string, double>& p, int draws) {
  for (const auto& [text, prob] : p) {
    const double expected = prob * draws;
    const double sigma = std::sqrt(draws * prob * (1.0 - prob));
    const int got = h.count(text) ? h.at(text) : 0;
    EXPECT_LE(std::abs(got - expected), 3.0 * sigma) << text;
  }
  for (const auto& [text, count] : h) EXPECT_TRUE(p.count(text)) << "unexpected " << text;
}

}  // namespace

TEST(Transform, IdentityAtDefaults) {
  const std::vector<double> p{0.1, 0.2, 0.7};
  EXPECT_EQ(transform_distribution(p, 1.0, 0.0), p);
}

TEST(Transform, TemperatureThenEpsilon) {
  const std::vector<double> p{0.5, 0.3, 0.2};
  const auto t = transform_distribution(p, 2.0, 0.0);
  const double z = std::sqrt(0.5) + std::sqrt(0.3) + std::sqrt(0.2);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(t[i], std::sqrt(p[i]) / z, 1e-12);
  const auto e = transform_distribution(p, 1.0, 0.25);
  EXPECT_NEAR(e[0], 0.625, 1e-12);
  EXPECT_NEAR(e[1], 0.375, 1e-12);
  EXPECT_EQ(e[2], 0.0);
}

TEST(Transform, KeepsLargestWhenAllPruned) {
  const auto e = transform_distribution(std::vector<double>{0.3, 0.4, 0.3}, 1.0, 0.5);
  EXPECT_EQ(e, (std::vector<double>{0.0, 1.0, 0.0}));
  EXPECT_THROW(transform_distribution(std::vector<double>{0.5, 0.6}, 1.0, 0.0), ValidationError);
}

TEST(SyntheticModel, ConditionalsFollowThePrefixTree) {
  const auto m = SyntheticModel::parse("0.4\ta\n0.35\tb c\n0.25\tb d\n");
  const auto root = m.conditional({});
  ASSERT_EQ(root.size(), m.vocab_size());
  EXPECT_DOUBLE_EQ(root[m.eos()], 0.0);
  EXPECT_EQ(m.max_len(), 2u);
  EXPECT_EQ(m.find("b d"), 2);
  EXPECT_EQ(m.find("b"), -1);
}

TEST(SyntheticModel, ParseErrors) {
  EXPECT_THROW(SyntheticModel::parse("0.5 a\n"), ParseError);
  EXPECT_THROW(SyntheticModel::parse("x\ta\n"), ParseError);
  EXPECT_THROW(SyntheticModel::parse("0.5\ta\n0.4\tb\n"), ParseError);
  EXPECT_THROW(SyntheticModel::parse("0.5\ta\n0.5\ta\n"), ParseError);
  EXPECT_THROW(SyntheticModel::parse(""), ParseError);
}

TEST(Sampling, AncestralFrequencies) {
  const auto m = SyntheticModel::parse(kThreeWay);
  SamplerConfig cfg{SamplingMethod::ancestral, 1.0, 0.0, 42, 1};
  expect_within_three_sigma(histogram(m, cfg, 10000), {{"a", 0.5}, {"b", 0.3}, {"c", 0.2}}, 10000);
}

TEST(Sampling, EpsilonAndTemperatureFrequencies) {
  const auto m = SyntheticModel::parse(kThreeWay);
  SamplerConfig eps{SamplingMethod::epsilon, 1.0, 0.25, 43, 1};
  expect_within_three_sigma(histogram(m, eps, 10000), {{"a", 0.625}, {"b", 0.375}}, 10000);
  SamplerConfig temp{SamplingMethod::temperature, 2.0, 0.0, 44, 1};
  const double z = std::sqrt(0.5) + std::sqrt(0.3) + std::sqrt(0.2);
  expect_within_three_sigma(histogram(m, temp, 10000),
                            {{"a", std::sqrt(0.5) / z}, {"b", std::sqrt(0.3) / z}, {"c", std::sqrt(0.2) / z}}, 10000);
}

TEST(Sampling, NeutralEpsilonMatchesAncestralDrawForDraw) {
  const auto m = SyntheticModel::load(testutil::source_path("data/models/synthetic50.tsv"));
  SamplerConfig a{SamplingMethod::ancestral, 1.0, 0.0, 5, 1};
  SamplerConfig e{SamplingMethod::epsilon, 1.0, 0.0, 5, 1};
  for (std::uint64_t i = 0; i < 500; ++i) {
    const auto x = sample_sequence(m, a, i);
    const auto y = sample_sequence(m, e, i);
    ASSERT_EQ(x.tokens, y.tokens);
    ASSERT_EQ(x.log_prob, y.log_prob);
  }
}

TEST(Sampling, LogProbsAndDeterminism) {
  const auto m = SyntheticModel::parse("0.4\ta\n0.35\tb c\n0.25\tb d\n");
  SamplerConfig cfg{SamplingMethod::ancestral, 1.0, 0.0, 9, 64};
  const auto s1 = sample_set(m, cfg, "u");
  const auto s2 = sample_set(m, cfg, "u");
  EXPECT_EQ(s1, s2);
  for (const auto& h : s1.hypotheses) {
    const auto idx = m.find(h.text);
    ASSERT_GE(idx, 0);
    EXPECT_NEAR(*h.log_prob, std::log(m.support()[static_cast<std::size_t>(idx)].probability), 1e-12);
  }
  // Draw k does not depend on the other draws.
  EXPECT_EQ(sample_sequence(m, cfg, 17).text, s1.hypotheses[17].text);
}

TEST(BeamSearch, WidthMatters) {
  const auto m = SyntheticModel::parse("0.4\ta\n0.35\tb c\n0.25\tb d\n");
  const auto greedy = beam_search(m, 1);
  ASSERT_EQ(greedy.size(), 1u);
  EXPECT_EQ(greedy[0].text, "b c");
  const auto wide = beam_search(m, 3);
  ASSERT_GE(wide.size(), 2u);
  EXPECT_EQ(wide[0].text, "a");
  EXPECT_NEAR(wide[0].score, std::log(0.4), 1e-12);
  EXPECT_EQ(wide[1].text, "b c");
  EXPECT_THROW(beam_search(m, 0), ValidationError);
}

TEST(ExactOptimum, MatchesBruteForceExpectation) {
  const auto m = SyntheticModel::parse(
      "0.3\tthe cat sat on the mat\n0.25\tthe cat sat on a mat\n0.2\ta cat sat on the mat\n"
      "0.15\tthe dog sat on the mat\n0.1\tthe cat sat\n");
  const Utility utility(UtilitySpec{});
  const auto opt = exact_mbr_optimum(m, utility);
  const auto texts = m.support_texts();
  const auto probs = m.support_probabilities();
  std::size_t best = 0;
  std::vector<double> expected(texts.size(), 0.0);
  for (std::size_t i = 0; i < texts.size(); ++i) {
    for (std::size_t j = 0; j < texts.size(); ++j)
      expected[i] += probs[j] * sentence_bleu(texts[i], std::vector<std::string>{texts[j]});
    if (expected[i] > expected[best]) best = i;
  }
  EXPECT_EQ(opt.index, best);
  EXPECT_EQ(opt.text, texts[best]);
  for (std::size_t i = 0; i < texts.size(); ++i) EXPECT_NEAR(opt.expected[i], expected[i], 1e-9);
}
