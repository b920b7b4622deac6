#include "mbrkit/rerank.hpp"

#include <cmath>
#include <vector>

#include "mbrkit/error.hpp"
#include "mbrkit/metrics.hpp"

namespace mbrkit {

namespace {

DecodeResult make_result(const HypothesisSet& set, DecodeMethod method, std::vector<double> scores,
                         bool minimize = false) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (minimize ? scores[i] < scores[best] : scores[i] > scores[best]) best = i;
  DecodeResult r;
  r.utterance_id = set.utterance_id;
  r.method = method;
  r.label = std::string(to_string(method));
  r.chosen_index = best;
  r.chosen_text = set.hypotheses[best].text;
  r.objective = scores[best];
  r.per_candidate_objective = std::move(scores);
  return r;
}

void require_nonempty(const HypothesisSet& set) {
  if (set.hypotheses.empty()) throw ValidationError("hypothesis set '" + set.utterance_id + "' is empty");
}

double length_normalized(const HypothesisSet& set, std::size_t i, double value) {
  const auto& tc = set.hypotheses[i].token_count;
  if (!tc) throw ValidationError("hypothesis " + std::to_string(i) + " of '" + set.utterance_id + "' has no token_count");
  if (*tc <= 0) throw ValidationError("hypothesis " + std::to_string(i) + " of '" + set.utterance_id + "' has token_count 0");
  return value / static_cast<double>(*tc);
}

double score_of(const HypothesisSet& set, std::size_t i, const std::string& key, bool normalize) {
  const auto& scores = set.hypotheses[i].external_scores;
  const auto it = scores.find(key);
  if (it == scores.end())
    throw ValidationError("hypothesis " + std::to_string(i) + " of '" + set.utterance_id + "' lacks score '" + key + "'");
  return normalize ? length_normalized(set, i, it->second) : it->second;
}

}  // namespace

DecodeResult map_select(const HypothesisSet& set, bool length_normalize) {
  require_nonempty(set);
  std::vector<double> scores;
  scores.reserve(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& lp = set.hypotheses[i].log_prob;
    if (!lp) throw ValidationError("hypothesis " + std::to_string(i) + " of '" + set.utterance_id + "' has no log_prob");
    scores.push_back(length_normalize ? length_normalized(set, i, *lp) : *lp);
  }
  return make_result(set, DecodeMethod::map, std::move(scores));
}

DecodeResult beam_select(const HypothesisSet& set) {
  require_nonempty(set);
  DecodeResult r;
  r.utterance_id = set.utterance_id;
  r.method = DecodeMethod::beam;
  r.label = "beam";
  r.chosen_index = 0;
  r.chosen_text = set.hypotheses[0].text;
  r.objective = set.hypotheses[0].log_prob.value_or(0.0);
  return r;
}

void WeightedScoreSpec::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("alpha must lie in [0, 1]");
  if (llm_key.empty() || asr_key.empty()) throw ValidationError("score keys must be non-empty");
}

DecodeResult weighted_select(const HypothesisSet& set, const WeightedScoreSpec& spec) {
  spec.validate();
  require_nonempty(set);
  std::vector<double> scores;
  scores.reserve(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    const double asr = score_of(set, i, spec.asr_key, spec.length_normalize_asr);
    const double llm = score_of(set, i, spec.llm_key, spec.length_normalize_llm);
    scores.push_back(spec.form == FusionForm::convex ? (1.0 - spec.alpha) * asr + spec.alpha * llm
                                                     : asr + spec.alpha * llm);
  }
  return make_result(set, DecodeMethod::weighted, std::move(scores));
}

DecodeResult oracle_select(const HypothesisSet& set, const std::string& reference, const Normalizer& normalizer,
                           TokenUnit unit) {
  require_nonempty(set);
  const auto ref = tokenize(normalizer.normalize(reference), unit);
  if (ref.empty())
    throw UndefinedError("utterance '" + set.utterance_id + "': reference is empty after normalization");
  std::vector<double> rates;
  rates.reserve(set.size());
  for (const auto& h : set.hypotheses) rates.push_back(error_rate(tokenize(normalizer.normalize(h.text), unit), ref));
  return make_result(set, DecodeMethod::oracle, std::move(rates), /*minimize=*/true);
}

}  // namespace mbrkit
