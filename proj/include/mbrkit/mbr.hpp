#pragma once

// Sample-based MBR selection: pick the hypothesis with the highest mean
// utility against all sampled hypotheses used as pseudo-references.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mbrkit/core.hpp"
#include "mbrkit/metrics.hpp"
#include "mbrkit/textnorm.hpp"

namespace mbrkit {

enum class UtilityKind { bleu_sentence, embedding_cosine_similarity, external_matrix };

std::string_view to_string(UtilityKind k);
UtilityKind parse_utility_kind(std::string_view s);

struct UtilitySpec {
  UtilityKind kind = UtilityKind::bleu_sentence;
  BleuConfig bleu;  // used by bleu_sentence
  NormalizerSpec normalizer;
  TokenUnit unit = TokenUnit::word;
  bool pretokenized = false;  // split on whitespace even when unit == char

  /// Short description recorded with every matrix.
  std::string id() const;
};

/// Precomputed utilities keyed by utterance id; indices refer to positions in
/// the original (non-deduplicated) hypothesis set.
class ExternalUtilities {
 public:
  /// One utterance: `i<TAB>j<TAB>value` lines.
  void load_file(const std::string& utterance_id, const std::filesystem::path& path);
  /// Every `<utterance_id>.tsv` in a directory.
  static ExternalUtilities load_dir(const std::filesystem::path& dir);

  void set(const std::string& utterance_id, std::size_t i, std::size_t j, double value);
  double at(const std::string& utterance_id, std::size_t i, std::size_t j) const;
  bool has(const std::string& utterance_id) const { return values_.count(utterance_id) > 0; }

 private:
  std::map<std::string, std::map<std::pair<std::size_t, std::size_t>, double>> values_;
};

class PreparedSet;

/// A utility function u(hypothesis, pseudo-reference) with its resources
/// loaded. Immutable after construction; share freely across threads.
class Utility {
 public:
  explicit Utility(UtilitySpec spec, std::shared_ptr<const EmbeddingTable> embeddings = {},
                   std::shared_ptr<const ExternalUtilities> external = {});

  const UtilitySpec& spec() const { return spec_; }
  const Normalizer& normalizer() const { return normalizer_; }

  /// Tokens the utility sees for a raw text.
  std::vector<std::string> tokens(std::string_view raw) const;

  /// Per-set state (normalized tokens, n-gram profiles, embeddings).
  PreparedSet prepare(const WeightedHypothesisSet& set) const;

 private:
  friend class PreparedSet;
  UtilitySpec spec_;
  Normalizer normalizer_;
  std::shared_ptr<const EmbeddingTable> embeddings_;
  std::shared_ptr<const ExternalUtilities> external_;
};

/// A hypothesis set bound to a utility. operator() is const and safe to
/// call concurrently.
class PreparedSet {
 public:
  std::size_t size() const { return size_; }
  double operator()(std::size_t hyp, std::size_t ref) const;

  /// Normalized tokens of item i (empty for non-lexical utilities).
  const std::vector<std::string>& tokens(std::size_t i) const { return tokens_[i]; }

 private:
  friend class Utility;
  const Utility* utility_ = nullptr;
  std::string utterance_id_;
  std::size_t size_ = 0;
  std::vector<std::vector<std::string>> tokens_;
  std::vector<NgramProfile> profiles_;
  std::vector<const std::vector<double>*> embeddings_;
  std::vector<std::size_t> source_index_;
};

struct UtilityMatrix {
  std::size_t n = 0;
  std::vector<double> values;  // row-major, values[i * n + j] = u(item i, pseudo-reference j)
  std::string spec_id;
  std::uint64_t evaluations = 0;

  double operator()(std::size_t i, std::size_t j) const { return values[i * n + j]; }
  static UtilityMatrix from_rows(const std::vector<std::vector<double>>& rows, std::string spec_id = "explicit");
};

/// Parallel kernel: rows are distributed over OpenMP threads. Every entry
/// is computed independently, so the result is bitwise identical for any
/// thread count.
UtilityMatrix utility_matrix(const WeightedHypothesisSet& set, const Utility& utility);
UtilityMatrix utility_matrix(const PreparedSet& prepared, std::string spec_id);

namespace reference {
/// Serial reference: plain double loop, BLEU computed directly from token
/// strings without the shared n-gram profiles. Used to check the kernel.
UtilityMatrix utility_matrix(const WeightedHypothesisSet& set, const Utility& utility);
}  // namespace reference

struct MbrSelection {
  std::size_t index = 0;
  std::vector<double> objectives;  // per distinct item
};

/// objective_i = (1/N) * sum_j weights[j] * values(i, j), including j == i;
/// argmax with ties to the lowest index.
MbrSelection mbr_select(const UtilityMatrix& matrix, std::span<const int> weights);

/// Same rule with real-valued reference weights (probabilities), used for
/// the exact optimum over an enumerable support.
MbrSelection mbr_select_expected(const UtilityMatrix& matrix, std::span<const double> probabilities);

// --- pruned selection -------------------------------------------------------

struct PruneRound {
  double keep_fraction = 1.0;  // non-final: fraction of the original candidates kept after the round
  std::size_t references = 0;  // pseudo-references sampled this round; 0 = all (final round)
};

/// Successive-halving schedule. All rounds but the last score survivors on a
/// weighted subsample of pseudo-references and keep the top fraction; the
/// last round scores the survivors exactly.
struct PruneSchedule {
  std::vector<PruneRound> rounds;

  /// [(0.25, 8), (1.0, all)]
  static PruneSchedule default_schedule();
  void validate() const;
};

/// Below this many distinct candidates the pruned selector scores exactly.
inline constexpr std::size_t kPruneMinCandidates = 16;

struct PrunedSelection {
  std::size_t index = 0;
  double objective = 0.0;
  std::uint64_t evaluations = 0;  // distinct (candidate, reference) pairs evaluated
  std::vector<std::size_t> survivors;
};

PrunedSelection mbr_select_pruned(const PreparedSet& prepared, std::span<const int> weights,
                                  const PruneSchedule& schedule, std::uint64_t seed);
PrunedSelection mbr_select_pruned(const WeightedHypothesisSet& set, const Utility& utility,
                                  const PruneSchedule& schedule, std::uint64_t seed);

}  // namespace mbrkit
