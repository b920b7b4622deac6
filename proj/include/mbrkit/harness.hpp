#pragma once

// Orchestration behind the command-line tool. Every command reads a
// RunConfig, does its work over utterances in parallel, and reduces and
// writes results in manifest order so outputs do not depend on the number
// of worker threads.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mbrkit/core.hpp"
#include "mbrkit/mbr.hpp"
#include "mbrkit/rerank.hpp"
#include "mbrkit/sampling.hpp"
#include "mbrkit/textnorm.hpp"

namespace mbrkit {

inline constexpr const char* kToolkitVersion = "0.1.0";

enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitPartial = 2 };

struct MethodConfig {
  std::string name;
  DecodeMethod type = DecodeMethod::map;

  bool length_normalize = false;  // map

  std::size_t beam_width = 1;  // beam
  std::string beam_hypotheses;  // path; "{width}" is replaced by beam_width

  std::size_t n = 0;  // mbr, mbr_pruned: first n samples, 0 = all
  UtilitySpec utility;
  std::optional<std::filesystem::path> external_dir;
  PruneSchedule schedule = PruneSchedule::default_schedule();

  WeightedScoreSpec weighted;  // weighted

  std::filesystem::path beam_path(const std::filesystem::path& base) const;
};

struct NoiseConfig {
  std::vector<std::filesystem::path> paths;
  std::optional<std::filesystem::path> dir;  // every *.wav inside, sorted
  double snr_db = 0.0;
  std::uint64_t seed = 0;
};

struct SimulateConfig {
  std::optional<std::filesystem::path> model;
  std::vector<std::size_t> n_grid{1, 2, 4, 8, 16, 32, 64};
  std::size_t seeds = 200;
  SamplerConfig sampler{SamplingMethod::ancestral, 1.0, 0.0, 0, 1};
  /// Use the whole support weighted by probability instead of sampling.
  bool enumerate = false;
  UtilitySpec utility;
};

struct CorrelateConfig {
  std::size_t n = 0;  // 0 = all samples
  UtilitySpec utility;
};

struct RunConfig {
  std::filesystem::path base_dir;  // relative paths resolve against this
  std::optional<std::filesystem::path> manifest;
  std::optional<std::filesystem::path> hypotheses;
  std::optional<std::filesystem::path> embeddings;
  std::optional<std::filesystem::path> decode_results;  // default <output_dir>/decode.jsonl
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 0;
  int workers = 0;  // 0 = OpenMP default

  NormalizerSpec normalizer;
  TokenUnit unit = TokenUnit::word;
  bool pretokenized = false;

  std::vector<MethodConfig> methods;
  NoiseConfig noise;
  SimulateConfig simulate;
  CorrelateConfig correlate;
  std::size_t bench_repetitions = 3;

  /// Effective configuration (after overrides) as JSON.
  nlohmann::json effective;

  static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
  static RunConfig load(const std::filesystem::path& path);

  /// Stable hash of the effective configuration, excluding keys that must
  /// not influence results (worker count, output directory).
  std::string digest() const;

  std::filesystem::path resolve(const std::filesystem::path& p) const;
  std::filesystem::path decode_results_path() const;
};

/// Command-line overrides, applied to the JSON before it is interpreted.
struct Overrides {
  std::vector<std::string> methods;  // keep only these method names
  std::optional<std::size_t> n;
  std::optional<std::size_t> beam_width;
  std::optional<double> alpha;
  std::optional<double> epsilon;
  std::optional<double> temperature;
  std::optional<double> snr_db;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::optional<int> workers;
};

void apply_overrides(nlohmann::json& config, const Overrides& overrides);
RunConfig load_config(const std::filesystem::path& path, const Overrides& overrides);

/// Sets the OpenMP thread count for the calling thread's parallel regions.
void set_workers(int workers);

// --- decode ---------------------------------------------------------------------

struct DecodeOutput {
  std::vector<DecodeResult> results;  // manifest order, then method order
  std::size_t skipped = 0;            // utterances without a hypothesis set
  std::vector<std::string> skipped_ids;
};

DecodeOutput run_decode(const RunConfig& cfg);
int cmd_decode(const RunConfig& cfg);

// --- evaluate -------------------------------------------------------------------

struct EvalRow {
  std::string utterance_id;
  std::string method;
  std::size_t chosen_index = 0;
  std::string chosen_text;
  std::size_t edits = 0;
  std::size_t ref_len = 0;
  double error_rate = 0.0;
  double sentence_bleu = 0.0;
  std::optional<double> semdist;
  std::size_t ref_words = 0;
  std::string bucket;
};

struct MethodSummary {
  std::string method;
  std::size_t utterances = 0;
  double error_rate = 0.0;
  double corpus_bleu = 0.0;
  std::optional<double> semdist;
};

struct BucketSummary {
  std::string method;
  std::string bucket;
  std::size_t utterances = 0;
  double error_rate = 0.0;
};

struct EvalReport {
  std::vector<MethodSummary> methods;
  std::vector<EvalRow> rows;
  std::vector<BucketSummary> buckets;
  std::string config_digest;
  std::string version = kToolkitVersion;

  const MethodSummary& method(const std::string& name) const;
};

/// Bucket label "(x, x+5]" for a reference word count.
std::string length_bucket(std::size_t ref_words);

EvalReport evaluate(const RunConfig& cfg, const std::vector<DecodeResult>& results,
                    const std::vector<Utterance>& manifest);
void write_report(const std::filesystem::path& dir, const EvalReport& report);
int cmd_evaluate(const RunConfig& cfg);

// --- correlate ------------------------------------------------------------------

struct CorrelationSummary {
  double mean_r = 0.0;
  double standard_error = 0.0;
  std::size_t instances = 0;  // used
  std::size_t skipped = 0;    // constant objective or error-rate vectors
  std::vector<std::pair<std::string, double>> per_instance;
};

/// Per instance: Pearson r between each sample's MBR objective and its
/// error rate against the reference.
CorrelationSummary correlate(const RunConfig& cfg, const std::vector<Utterance>& manifest,
                             const std::vector<HypothesisSet>& sets);
int cmd_correlate(const RunConfig& cfg);

// --- simulate -------------------------------------------------------------------

struct RegretRow {
  std::size_t n = 0;
  double median = 0.0;
  double mean = 0.0;
  std::vector<double> regrets;  // one per seed
};

struct RegretTable {
  std::string optimum_text;
  double optimum_expected_utility = 0.0;
  std::vector<RegretRow> rows;
  std::size_t inversions = 0;  // adjacent grid points where the median rises
  bool monotone = false;       // at most one inversion
};

RegretTable simulate_regret(const SyntheticModel& model, const Utility& utility, const SimulateConfig& cfg);
int cmd_simulate(const RunConfig& cfg);

// --- bench ----------------------------------------------------------------------

struct BenchRow {
  std::string method;
  std::vector<double> seconds_per_utterance;  // one per repetition
  double mean = 0.0;
  double median = 0.0;
  double evaluations_per_utterance = 0.0;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  std::optional<double> pruned_speedup;          // exact time / pruned time
  std::optional<double> pruned_evaluation_ratio;  // pruned evals / exact evals
};

BenchReport run_bench(const RunConfig& cfg);
int cmd_bench(const RunConfig& cfg);

// --- mix-noise ------------------------------------------------------------------

struct MixOutcome {
  std::vector<Utterance> manifest;  // rows that were mixed successfully
  std::vector<std::pair<std::string, std::string>> failures;  // (utterance id, reason)
  std::size_t clipped_files = 0;
};

/// Noise file index for an utterance: the noise seed combined with a stable
/// hash of the utterance id.
std::size_t pick_noise(const NoiseConfig& noise, std::size_t noise_count, const std::string& utterance_id);

MixOutcome mix_noise(const RunConfig& cfg);
int cmd_mix_noise(const RunConfig& cfg);

// --- merge-scores ---------------------------------------------------------------

/// Attaches `key<TAB>utterance_id<TAB>hyp_index<TAB>value` rows to the sets.
void merge_scores(std::vector<HypothesisSet>& sets, const std::filesystem::path& scores_path);
int cmd_merge_scores(const RunConfig& cfg, const std::filesystem::path& scores_path);

}  // namespace mbrkit
