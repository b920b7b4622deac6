#pragma once

// Lexical and embedding metrics. Everything here is a pure function over
// read-only inputs.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace mbrkit {

// --- edit distance --------------------------------------------------------

struct EditStats {
  std::size_t distance = 0;
  std::size_t ref_len = 0;

  bool operator==(const EditStats&) const = default;
};

/// Token-level Levenshtein distance with unit costs.
template <typename T>
EditStats edit_distance(std::span<const T> hyp, std::span<const T> ref) {
  std::vector<std::size_t> prev(ref.size() + 1), cur(ref.size() + 1);
  for (std::size_t j = 0; j <= ref.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= hyp.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= ref.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (hyp[i - 1] == ref[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return {prev[ref.size()], ref.size()};
}

inline EditStats edit_distance(const std::vector<std::string>& hyp, const std::vector<std::string>& ref) {
  return edit_distance<std::string>(std::span<const std::string>(hyp), std::span<const std::string>(ref));
}

/// Micro-averaged error rate: sum of distances over sum of reference
/// lengths. Throws UndefinedError when every reference is empty.
double corpus_error_rate(std::span<const EditStats> stats);
double corpus_error_rate(std::span<const std::pair<std::vector<std::string>, std::vector<std::string>>> pairs);

/// Error rate of one hypothesis against one reference.
double error_rate(const std::vector<std::string>& hyp, const std::vector<std::string>& ref);

// --- BLEU -----------------------------------------------------------------

enum class BleuSmoothing { none, floor, exp };
enum class BleuLevel { sentence, corpus };

struct BleuConfig {
  int max_order = 4;
  BleuSmoothing smoothing = BleuSmoothing::exp;
  double floor_value = 0.1;
  BleuLevel level = BleuLevel::sentence;
  /// Truncate the geometric mean at the highest order with any n-gram.
  /// Unset means "on for sentence level, off for corpus level".
  std::optional<bool> effective_order;

  bool uses_effective_order() const { return effective_order.value_or(level == BleuLevel::sentence); }
  void validate() const;
};

std::string_view to_string(BleuSmoothing s);
BleuSmoothing parse_bleu_smoothing(std::string_view s);

/// Sufficient statistics: clipped n-gram matches and hypothesis n-gram
/// totals per order, plus the hypothesis and effective reference lengths.
struct BleuStats {
  std::vector<std::int64_t> correct;
  std::vector<std::int64_t> total;
  std::int64_t hyp_len = 0;
  std::int64_t ref_len = 0;

  explicit BleuStats(int max_order = 4) : correct(static_cast<std::size_t>(max_order), 0),
                                          total(static_cast<std::size_t>(max_order), 0) {}
  BleuStats& operator+=(const BleuStats& other);
};

/// Statistics of one segment. With several references, n-gram counts are
/// clipped by the per-n-gram maximum over references and the reference
/// length is the one closest to the hypothesis length (shorter on ties).
BleuStats bleu_stats(std::span<const std::string> hyp, std::span<const std::vector<std::string>> refs,
                     int max_order);

/// Score in [0, 100] from accumulated statistics.
double bleu_score(const BleuStats& stats, const BleuConfig& cfg);

double sentence_bleu(std::span<const std::string> hyp, std::span<const std::vector<std::string>> refs,
                     const BleuConfig& cfg = {});
/// Whitespace-tokenized convenience overload.
double sentence_bleu(std::string_view hyp, std::span<const std::string> refs, const BleuConfig& cfg = {});

/// `ref_streams[k][i]` is the k-th reference of segment i. Every stream must
/// be aligned with `hyps`.
double corpus_bleu(std::span<const std::vector<std::string>> hyps,
                   std::span<const std::vector<std::vector<std::string>>> ref_streams, BleuConfig cfg = {});

/// Precomputed n-gram counts of one token sequence. Ids must come from a
/// shared NgramInterner so two profiles can be intersected.
struct NgramProfile {
  std::int64_t length = 0;
  // per order: (ngram id, count), sorted by id
  std::vector<std::vector<std::pair<std::uint32_t, std::int32_t>>> counts;
};

class NgramInterner {
 public:
  explicit NgramInterner(int max_order = 4) : max_order_(max_order) {}

  NgramProfile profile(std::span<const std::string> tokens);
  int max_order() const { return max_order_; }

 private:
  int max_order_;
  std::unordered_map<std::string, std::uint32_t> tokens_;
  std::unordered_map<std::uint64_t, std::uint32_t> ngrams_;  // (prefix id, token id) -> id
};

/// Single-reference statistics from two profiles built by the same interner.
BleuStats bleu_stats(const NgramProfile& hyp, const NgramProfile& ref, int max_order);

// --- embeddings -----------------------------------------------------------

/// Key -> vector map read from `key<TAB>v1,v2,...` lines. The first record
/// fixes the dimension; keys are split off at the last tab.
class EmbeddingTable {
 public:
  static EmbeddingTable load(const std::filesystem::path& path);

  void add(std::string key, std::vector<double> vec);
  const std::vector<double>* find(std::string_view key) const;
  const std::vector<double>& at(std::string_view key) const;

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return table_.size(); }

 private:
  std::size_t dim_ = 0;
  std::unordered_map<std::string, std::vector<double>> table_;
};

/// 1 - cos(a, b), in [0, 2].
double cosine_distance(std::span<const double> a, std::span<const double> b);

/// Sample Pearson correlation. Throws UndefinedError on constant input.
double pearson(std::span<const double> xs, std::span<const double> ys);

}  // namespace mbrkit
