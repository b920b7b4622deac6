#pragma once

// Shared data model: utterances, hypothesis sets and decode results, plus
// their line-oriented file formats.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mbrkit {

struct Utterance {
  std::string id;
  std::optional<std::string> audio_path;
  std::optional<std::string> reference;
  std::string language;

  bool operator==(const Utterance&) const = default;
};

enum class SamplingMethod { ancestral, temperature, epsilon };

std::string_view to_string(SamplingMethod m);
SamplingMethod parse_sampling_method(std::string_view s);

struct SamplerConfig {
  SamplingMethod method = SamplingMethod::epsilon;
  double temperature = 1.0;
  double epsilon = 0.01;
  std::uint64_t seed = 0;
  int num_samples = 1;

  /// Temperature and epsilon actually applied (ancestral ignores both).
  double effective_temperature() const;
  double effective_epsilon() const;

  /// Throws ValidationError on out-of-range fields.
  void validate() const;

  bool operator==(const SamplerConfig&) const = default;
};

struct Hypothesis {
  std::string text;
  std::optional<double> log_prob;
  std::optional<std::int64_t> token_count;
  std::map<std::string, double> external_scores;

  bool operator==(const Hypothesis&) const = default;
};

struct HypothesisSet {
  std::string utterance_id;
  std::vector<Hypothesis> hypotheses;
  std::optional<SamplerConfig> sampler;

  std::size_t size() const { return hypotheses.size(); }

  /// Set restricted to its first n hypotheses (prefix reuse for N-ablation).
  HypothesisSet prefix(std::size_t n) const;

  void validate() const;

  bool operator==(const HypothesisSet&) const = default;
};

struct WeightedItem {
  Hypothesis hypothesis;
  int weight = 1;
  std::size_t first_index = 0;  // position of the first occurrence in the source set
};

/// Distinct texts of a HypothesisSet with their multiplicities.
struct WeightedHypothesisSet {
  std::string utterance_id;
  std::vector<WeightedItem> items;

  std::size_t size() const { return items.size(); }
  int total_weight() const;
  std::vector<int> weights() const;
};

/// Collapses repeated texts (exact byte equality on the raw text). The
/// retained hypothesis for each text is its first occurrence.
WeightedHypothesisSet dedup_weight(const HypothesisSet& set);

/// Set with every item repeated `weight` times in first-occurrence order.
HypothesisSet expand(const WeightedHypothesisSet& set);

enum class DecodeMethod { map, beam, mbr, mbr_pruned, weighted, oracle };

std::string_view to_string(DecodeMethod m);
DecodeMethod parse_decode_method(std::string_view s);

struct DecodeResult {
  std::string utterance_id;
  DecodeMethod method = DecodeMethod::map;
  std::string label;  // configured method name, e.g. "mbr_n64"
  std::size_t chosen_index = 0;
  std::string chosen_text;
  double objective = 0.0;
  std::optional<std::vector<double>> per_candidate_objective;
  std::optional<std::uint64_t> utility_evaluations;

  bool operator==(const DecodeResult&) const = default;
};

// --- manifest -------------------------------------------------------------

/// Tab-separated `id audio_path reference language`; empty field = absent,
/// `#` lines are comments. Duplicate ids are rejected.
std::vector<Utterance> parse_manifest(std::istream& in, const std::string& source = "<manifest>");
std::vector<Utterance> load_manifest(const std::filesystem::path& path);
void write_manifest(std::ostream& out, const std::vector<Utterance>& utterances);
void save_manifest(const std::filesystem::path& path, const std::vector<Utterance>& utterances);

// --- hypothesis sets ------------------------------------------------------

/// One JSON object per line. Canonical output (compact, fixed key order)
/// reproduces a canonical input byte for byte.
std::string to_json_line(const HypothesisSet& set);
HypothesisSet hypothesis_set_from_json(std::string_view line, const std::string& source = "<json>",
                                       std::size_t line_no = 0);

std::vector<HypothesisSet> parse_hypothesis_sets(std::istream& in,
                                                 const std::string& source = "<hypotheses>");
std::vector<HypothesisSet> load_hypothesis_sets(const std::filesystem::path& path);
void write_hypothesis_sets(std::ostream& out, const std::vector<HypothesisSet>& sets);
void save_hypothesis_sets(const std::filesystem::path& path, const std::vector<HypothesisSet>& sets);

// --- decode results -------------------------------------------------------

std::string to_json_line(const DecodeResult& result);
DecodeResult decode_result_from_json(std::string_view line, const std::string& source = "<json>",
                                     std::size_t line_no = 0);
std::vector<DecodeResult> load_decode_results(const std::filesystem::path& path);
void save_decode_results(const std::filesystem::path& path, const std::vector<DecodeResult>& results);

/// Reads a whole file; throws Error when it cannot be opened.
std::string read_file(const std::filesystem::path& path);

}  // namespace mbrkit
