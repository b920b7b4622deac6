#include "mbrkit/mbr.hpp"

#include <omp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mbrkit/error.hpp"
#include "mbrkit/rng.hpp"

namespace mbrkit {

std::string_view to_string(UtilityKind k) {
  switch (k) {
    case UtilityKind::bleu_sentence: return "bleu_sentence";
    case UtilityKind::embedding_cosine_similarity: return "embedding_cosine_similarity";
    case UtilityKind::external_matrix: return "external_matrix";
  }
  return "?";
}

UtilityKind parse_utility_kind(std::string_view s) {
  if (s == "bleu_sentence" || s == "bleu") return UtilityKind::bleu_sentence;
  if (s == "embedding_cosine_similarity" || s == "embedding") return UtilityKind::embedding_cosine_similarity;
  if (s == "external_matrix" || s == "external") return UtilityKind::external_matrix;
  throw ValidationError("unknown utility kind '" + std::string(s) + "'");
}

std::string UtilitySpec::id() const {
  std::ostringstream ss;
  ss << to_string(kind);
  if (kind == UtilityKind::bleu_sentence) {
    ss << ":order=" << bleu.max_order << ":smooth=" << to_string(bleu.smoothing);
    if (bleu.smoothing == BleuSmoothing::floor) ss << '(' << bleu.floor_value << ')';
    ss << ":norm=" << to_string(normalizer.kind) << ":unit=" << (pretokenized ? "pretokenized" : to_string(unit));
  }
  return ss.str();
}

// --- external utilities ---------------------------------------------------------

void ExternalUtilities::load_file(const std::string& utterance_id, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::istringstream fields(line);
    std::string a, b, c;
    if (!std::getline(fields, a, '\t') || !std::getline(fields, b, '\t') || !std::getline(fields, c, '\t'))
      throw ParseError(path.string(), line_no, "expected `i<TAB>j<TAB>value`");
    try {
      std::size_t pos = 0;
      const auto i = std::stoull(a, &pos);
      if (pos != a.size()) throw std::invalid_argument(a);
      const auto j = std::stoull(b, &pos);
      if (pos != b.size()) throw std::invalid_argument(b);
      const double v = std::stod(c, &pos);
      if (pos != c.size() || !std::isfinite(v)) throw std::invalid_argument(c);
      set(utterance_id, i, j, v);
    } catch (const std::logic_error&) {
      throw ParseError(path.string(), line_no, "malformed triple");
    }
  }
}

ExternalUtilities ExternalUtilities::load_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error("not a directory: " + dir.string());
  ExternalUtilities ext;
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".tsv") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) ext.load_file(f.stem().string(), f);
  return ext;
}

void ExternalUtilities::set(const std::string& utterance_id, std::size_t i, std::size_t j, double value) {
  values_[utterance_id][{i, j}] = value;
}

double ExternalUtilities::at(const std::string& utterance_id, std::size_t i, std::size_t j) const {
  const auto it = values_.find(utterance_id);
  if (it != values_.end()) {
    const auto jt = it->second.find({i, j});
    if (jt != it->second.end()) return jt->second;
  }
  throw ValidationError("no external utility for utterance '" + utterance_id + "' pair (" + std::to_string(i) +
                        ", " + std::to_string(j) + ")");
}

// --- Utility ----------------------------------------------------------------------

Utility::Utility(UtilitySpec spec, std::shared_ptr<const EmbeddingTable> embeddings,
                 std::shared_ptr<const ExternalUtilities> external)
    : spec_(std::move(spec)),
      normalizer_(spec_.normalizer),
      embeddings_(std::move(embeddings)),
      external_(std::move(external)) {
  spec_.bleu.level = BleuLevel::sentence;
  spec_.bleu.validate();
  if (spec_.kind == UtilityKind::embedding_cosine_similarity && !embeddings_)
    throw ValidationError("embedding utility requires an embedding table");
  if (spec_.kind == UtilityKind::external_matrix && !external_)
    throw ValidationError("external_matrix utility requires precomputed utilities");
}

std::vector<std::string> Utility::tokens(std::string_view raw) const {
  const std::string norm = normalizer_.normalize(raw);
  return tokenize(norm, spec_.pretokenized ? TokenUnit::word : spec_.unit);
}

PreparedSet Utility::prepare(const WeightedHypothesisSet& set) const {
  PreparedSet p;
  p.utility_ = this;
  p.utterance_id_ = set.utterance_id;
  p.size_ = set.size();
  p.source_index_.reserve(set.size());
  for (const auto& item : set.items) p.source_index_.push_back(item.first_index);

  switch (spec_.kind) {
    case UtilityKind::bleu_sentence: {
      NgramInterner interner(spec_.bleu.max_order);
      p.tokens_.reserve(set.size());
      p.profiles_.reserve(set.size());
      for (const auto& item : set.items) {
        p.tokens_.push_back(tokens(item.hypothesis.text));
        p.profiles_.push_back(interner.profile(p.tokens_.back()));
      }
      break;
    }
    case UtilityKind::embedding_cosine_similarity:
      p.tokens_.resize(set.size());
      for (const auto& item : set.items) {
        const auto* v = embeddings_->find(item.hypothesis.text);
        if (!v)
          throw ValidationError("utterance '" + set.utterance_id + "': no embedding for hypothesis " +
                                std::to_string(item.first_index) + " ('" + item.hypothesis.text + "')");
        p.embeddings_.push_back(v);
      }
      break;
    case UtilityKind::external_matrix:
      p.tokens_.resize(set.size());
      if (!external_->has(set.utterance_id))
        throw ValidationError("no external utilities for utterance '" + set.utterance_id + "'");
      break;
  }
  return p;
}

double PreparedSet::operator()(std::size_t hyp, std::size_t ref) const {
  const auto& spec = utility_->spec_;
  switch (spec.kind) {
    case UtilityKind::bleu_sentence:
      return bleu_score(bleu_stats(profiles_[hyp], profiles_[ref], spec.bleu.max_order), spec.bleu);
    case UtilityKind::embedding_cosine_similarity:
      return 1.0 - cosine_distance(*embeddings_[hyp], *embeddings_[ref]);
    case UtilityKind::external_matrix:
      return utility_->external_->at(utterance_id_, source_index_[hyp], source_index_[ref]);
  }
  return 0.0;
}

// --- matrices -----------------------------------------------------------------------

UtilityMatrix UtilityMatrix::from_rows(const std::vector<std::vector<double>>& rows, std::string spec_id) {
  UtilityMatrix m;
  m.n = rows.size();
  m.spec_id = std::move(spec_id);
  m.values.reserve(m.n * m.n);
  for (const auto& row : rows) {
    if (row.size() != m.n) throw ValidationError("utility matrix must be square");
    for (double v : row) {
      if (!std::isfinite(v)) throw ValidationError("utility matrix entries must be finite");
      m.values.push_back(v);
    }
  }
  m.evaluations = m.n * m.n;
  return m;
}

UtilityMatrix utility_matrix(const PreparedSet& prepared, std::string spec_id) {
  const std::size_t n = prepared.size();
  UtilityMatrix m;
  m.n = n;
  m.spec_id = std::move(spec_id);
  m.values.assign(n * n, 0.0);
  m.evaluations = static_cast<std::uint64_t>(n) * n;

  std::exception_ptr failure;
  const auto rows = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t i = 0; i < rows; ++i) {
    const auto row = static_cast<std::size_t>(i);
    for (std::size_t j = 0; j < n; ++j) {
      try {
        m.values[row * n + j] = prepared(row, j);
      } catch (...) {
#pragma omp critical(mbrkit_utility_failure)
        if (!failure) failure = std::current_exception();
      }
    }
  }
  if (failure) std::rethrow_exception(failure);
  for (double v : m.values)
    if (!std::isfinite(v)) throw Error("utility produced a non-finite value (" + m.spec_id + ")");
  return m;
}

UtilityMatrix utility_matrix(const WeightedHypothesisSet& set, const Utility& utility) {
  return utility_matrix(utility.prepare(set), utility.spec().id());
}

namespace reference {

UtilityMatrix utility_matrix(const WeightedHypothesisSet& set, const Utility& utility) {
  const std::size_t n = set.size();
  UtilityMatrix m;
  m.n = n;
  m.spec_id = utility.spec().id();
  m.values.assign(n * n, 0.0);
  m.evaluations = static_cast<std::uint64_t>(n) * n;
  if (utility.spec().kind == UtilityKind::bleu_sentence) {
    std::vector<std::vector<std::string>> tokens;
    for (const auto& item : set.items) tokens.push_back(utility.tokens(item.hypothesis.text));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        m.values[i * n + j] =
            sentence_bleu(tokens[i], std::span<const std::vector<std::string>>(&tokens[j], 1), utility.spec().bleu);
    return m;
  }
  const PreparedSet prepared = utility.prepare(set);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) m.values[i * n + j] = prepared(i, j);
  return m;
}

}  // namespace reference

// --- selection ----------------------------------------------------------------------------

namespace {

std::size_t argmax_low_index(const std::vector<double>& xs) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < xs.size(); ++i)
    if (xs[i] > xs[best]) best = i;
  return best;
}

}  // namespace

MbrSelection mbr_select(const UtilityMatrix& matrix, std::span<const int> weights) {
  if (matrix.n == 0) throw ValidationError("mbr_select on an empty matrix");
  if (weights.size() != matrix.n)
    throw ValidationError("mbr_select: " + std::to_string(weights.size()) + " weights for " +
                          std::to_string(matrix.n) + " candidates");
  long long total = 0;
  for (int w : weights) {
    if (w < 1) throw ValidationError("mbr_select: weights must be positive");
    total += w;
  }
  MbrSelection sel;
  sel.objectives.resize(matrix.n);
  for (std::size_t i = 0; i < matrix.n; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < matrix.n; ++j) sum += static_cast<double>(weights[j]) * matrix(i, j);
    sel.objectives[i] = sum / static_cast<double>(total);
  }
  sel.index = argmax_low_index(sel.objectives);
  return sel;
}

MbrSelection mbr_select_expected(const UtilityMatrix& matrix, std::span<const double> probabilities) {
  if (matrix.n == 0) throw ValidationError("mbr_select_expected on an empty matrix");
  if (probabilities.size() != matrix.n) throw ValidationError("mbr_select_expected: weight count mismatch");
  MbrSelection sel;
  sel.objectives.resize(matrix.n);
  for (std::size_t i = 0; i < matrix.n; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < matrix.n; ++j) sum += probabilities[j] * matrix(i, j);
    sel.objectives[i] = sum;
  }
  sel.index = argmax_low_index(sel.objectives);
  return sel;
}

// --- pruning ----------------------------------------------------------------------------------

PruneSchedule PruneSchedule::default_schedule() { return {{{0.25, 8}, {1.0, 0}}}; }

void PruneSchedule::validate() const {
  if (rounds.empty()) throw ValidationError("prune schedule has no rounds");
  double last_fraction = 1.0 + 1e-12;
  for (std::size_t r = 0; r + 1 < rounds.size(); ++r) {
    const auto& round = rounds[r];
    if (!(round.keep_fraction > 0.0 && round.keep_fraction <= 1.0))
      throw ValidationError("prune round " + std::to_string(r) + ": keep fraction must lie in (0, 1]");
    if (!(round.keep_fraction < last_fraction))
      throw ValidationError("prune round " + std::to_string(r) + ": keep fractions must strictly decrease");
    if (round.references == 0)
      throw ValidationError("prune round " + std::to_string(r) + ": only the final round may use all references");
    last_fraction = round.keep_fraction;
  }
  const auto& last = rounds.back();
  if (last.references != 0) throw ValidationError("final prune round must score against all references");
  if (!(last.keep_fraction > 0.0 && last.keep_fraction <= 1.0))
    throw ValidationError("final prune round: keep fraction must lie in (0, 1]");
}

namespace {

// Draws `count` distinct indices with probability proportional to weight.
std::vector<std::size_t> sample_references(std::span<const int> weights, std::size_t count, Rng& rng) {
  std::vector<std::size_t> pool(weights.size());
  std::iota(pool.begin(), pool.end(), 0);
  if (count >= pool.size()) return pool;
  std::uint64_t remaining = 0;
  for (int w : weights) remaining += static_cast<std::uint64_t>(w);
  std::vector<std::size_t> picked;
  picked.reserve(count);
  while (picked.size() < count) {
    std::uint64_t r = rng.below(remaining);
    std::size_t k = 0;
    while (r >= static_cast<std::uint64_t>(weights[pool[k]])) {
      r -= static_cast<std::uint64_t>(weights[pool[k]]);
      ++k;
    }
    picked.push_back(pool[k]);
    remaining -= static_cast<std::uint64_t>(weights[pool[k]]);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(k));
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

}  // namespace

PrunedSelection mbr_select_pruned(const PreparedSet& prepared, std::span<const int> weights,
                                  const PruneSchedule& schedule, std::uint64_t seed) {
  schedule.validate();
  const std::size_t n = prepared.size();
  if (n == 0) throw ValidationError("mbr_select_pruned on an empty set");
  if (weights.size() != n) throw ValidationError("mbr_select_pruned: weight count mismatch");
  long long total_weight = 0;
  for (int w : weights) {
    if (w < 1) throw ValidationError("mbr_select_pruned: weights must be positive");
    total_weight += w;
  }

  std::vector<double> cache(n * n, 0.0);
  std::vector<char> known(n * n, 0);
  std::uint64_t evaluations = 0;
  auto u = [&](std::size_t i, std::size_t j) {
    const std::size_t k = i * n + j;
    if (!known[k]) {
      cache[k] = prepared(i, j);
      known[k] = 1;
      ++evaluations;
    }
    return cache[k];
  };

  std::vector<std::size_t> survivors(n);
  std::iota(survivors.begin(), survivors.end(), 0);

  if (n >= kPruneMinCandidates) {
    for (std::size_t r = 0; r + 1 < schedule.rounds.size(); ++r) {
      const auto& round = schedule.rounds[r];
      const auto keep = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::ceil(round.keep_fraction * static_cast<double>(n) - 1e-9)));
      if (keep >= survivors.size()) continue;
      Rng rng(seed, r);
      const auto refs = sample_references(weights, round.references, rng);
      std::vector<std::pair<double, std::size_t>> scored;
      scored.reserve(survivors.size());
      for (std::size_t c : survivors) {
        double sum = 0.0;
        for (std::size_t j : refs) sum += u(c, j);
        scored.emplace_back(sum / static_cast<double>(refs.size()), c);
      }
      std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
      survivors.clear();
      for (std::size_t k = 0; k < keep; ++k) survivors.push_back(scored[k].second);
      std::sort(survivors.begin(), survivors.end());
    }
  }

  PrunedSelection out;
  out.survivors = survivors;
  bool first = true;
  for (std::size_t c : survivors) {
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) sum += static_cast<double>(weights[j]) * u(c, j);
    const double objective = sum / static_cast<double>(total_weight);
    if (first || objective > out.objective) {
      out.index = c;
      out.objective = objective;
      first = false;
    }
  }
  out.evaluations = evaluations;
  return out;
}

PrunedSelection mbr_select_pruned(const WeightedHypothesisSet& set, const Utility& utility,
                                  const PruneSchedule& schedule, std::uint64_t seed) {
  return mbr_select_pruned(utility.prepare(set), set.weights(), schedule, seed);
}

}  // namespace mbrkit
