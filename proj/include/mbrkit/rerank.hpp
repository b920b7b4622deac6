#pragma once

// Selection baselines that do not use pairwise utilities.

#include <string>

#include "mbrkit/core.hpp"
#include "mbrkit/textnorm.hpp"

namespace mbrkit {

/// argmax of log_prob (or log_prob / token_count), lowest index on ties.
DecodeResult map_select(const HypothesisSet& set, bool length_normalize = false);

/// Index 0 of a set produced by beam search.
DecodeResult beam_select(const HypothesisSet& set);

enum class FusionForm {
  convex,  // (1 - alpha) * asr + alpha * llm
  sum,     // asr + alpha * llm
};

struct WeightedScoreSpec {
  double alpha = 0.05;
  std::string llm_key = "llm_score";
  std::string asr_key = "asr_score";
  bool length_normalize_llm = false;
  bool length_normalize_asr = false;
  FusionForm form = FusionForm::convex;

  void validate() const;
};

/// Fuses two external score columns and takes the argmax.
DecodeResult weighted_select(const HypothesisSet& set, const WeightedScoreSpec& spec);

/// Hypothesis with the lowest error rate against the reference. The
/// objective is the achieved rate.
DecodeResult oracle_select(const HypothesisSet& set, const std::string& reference, const Normalizer& normalizer,
                           TokenUnit unit);

}  // namespace mbrkit
