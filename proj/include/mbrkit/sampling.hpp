#pragma once

// Sampling and search over an abstract next-token model, plus small
// enumerable models for checking sample-based MBR against its exact optimum.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mbrkit/core.hpp"
#include "mbrkit/mbr.hpp"

namespace mbrkit {

using TokenId = std::uint32_t;

/// P(next token | prefix). Implementations must allow concurrent
/// conditional() calls.
class NextTokenModel {
 public:
  virtual ~NextTokenModel() = default;

  virtual std::size_t vocab_size() const = 0;
  virtual TokenId eos() const = 0;
  /// Every prefix of this length must put all mass on eos.
  virtual std::size_t max_len() const = 0;
  /// Distribution over the vocabulary; sums to 1 within 1e-9.
  virtual std::vector<double> conditional(std::span<const TokenId> prefix) const = 0;
  virtual std::string detokenize(std::span<const TokenId> tokens) const = 0;
};

/// Explicit list of strings with probabilities, compiled into a prefix tree.
/// Token 0 is the end-of-sequence marker.
class SyntheticModel final : public NextTokenModel {
 public:
  struct Entry {
    std::vector<std::string> tokens;
    double probability = 0.0;
  };

  /// Probabilities must sum to 1 within 1e-6; inside that tolerance they are
  /// renormalized (with a warning when the deviation exceeds 1e-12).
  explicit SyntheticModel(std::vector<Entry> entries);

  /// `probability<TAB>space-separated-tokens` per line, `#` comments.
  static SyntheticModel parse(std::string_view text, const std::string& source = "<model>");
  static SyntheticModel load(const std::filesystem::path& path);

  std::size_t vocab_size() const override { return vocab_.size(); }
  TokenId eos() const override { return 0; }
  std::size_t max_len() const override { return max_len_; }
  std::vector<double> conditional(std::span<const TokenId> prefix) const override;
  std::string detokenize(std::span<const TokenId> tokens) const override;

  const std::vector<Entry>& support() const { return entries_; }
  std::vector<std::string> support_texts() const;
  std::vector<double> support_probabilities() const;
  /// Index of a text in the support, or -1.
  std::ptrdiff_t find(std::string_view text) const;

 private:
  struct Node {
    double mass = 0.0;      // total probability of strings with this prefix
    double end_mass = 0.0;  // probability of the string equal to this prefix
    std::vector<std::pair<TokenId, std::size_t>> children;  // sorted by token
  };
  std::vector<Entry> entries_;
  std::vector<std::string> vocab_;
  std::vector<Node> nodes_;
  std::size_t max_len_ = 0;
};

/// Temperature first (p_i ∝ p_i^(1/T)), then drop entries below epsilon and
/// renormalize. If nothing survives the threshold, the single largest entry
/// is kept. T == 1 and epsilon == 0 return the input unchanged.
std::vector<double> transform_distribution(std::span<const double> p, double temperature, double epsilon);

struct SampledSequence {
  std::vector<TokenId> tokens;  // without the end marker
  std::string text;
  double log_prob = 0.0;       // under the transformed (sampling) distribution
  double base_log_prob = 0.0;  // under the model itself

  /// log_prob of the hypothesis is the base-model value; the sampling
  /// distribution's value is kept as external score "sampler_log_prob".
  Hypothesis to_hypothesis() const;
};

/// Draw number `draw_index` of the stream defined by cfg.seed. The result
/// does not depend on which other draws are made.
SampledSequence sample_sequence(const NextTokenModel& model, const SamplerConfig& cfg, std::uint64_t draw_index);

/// cfg.num_samples draws (indices 0..num_samples-1), drawn in parallel.
HypothesisSet sample_set(const NextTokenModel& model, const SamplerConfig& cfg, const std::string& utterance_id);

struct BeamResult {
  std::vector<TokenId> tokens;
  std::string text;
  double score = 0.0;  // total log-probability
};

/// Length-synchronous beam search. Finished sequences compete on total
/// log-probability; returns up to `width` results, best first.
std::vector<BeamResult> beam_search(const NextTokenModel& model, std::size_t width);

inline constexpr std::size_t kMaxEnumerableSupport = 1000;

struct ExactOptimum {
  std::size_t index = 0;
  std::string text;
  double expected_utility = 0.0;
  std::vector<double> expected;  // E_{y'~P}[u(y, y')] for every support string
};

/// Maximizer of the expected utility over the model's whole support.
ExactOptimum exact_mbr_optimum(const SyntheticModel& model, const Utility& utility);

}  // namespace mbrkit
