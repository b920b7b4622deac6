#include "mbrkit/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "mbrkit/error.hpp"
#include "mbrkit/log.hpp"
#include "mbrkit/rng.hpp"

namespace mbrkit {

namespace {

constexpr double kDistributionTolerance = 1e-9;
constexpr double kModelTolerance = 1e-6;

void check_distribution(std::span<const double> p) {
  if (p.empty()) throw ValidationError("empty probability vector");
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("probability vector has a negative or non-finite entry");
    sum += v;
  }
  if (std::abs(sum - 1.0) > kDistributionTolerance)
    throw ValidationError("probability vector sums to " + std::to_string(sum) + ", not 1");
}

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  return out;
}

}  // namespace

// --- SyntheticModel -------------------------------------------------------------

SyntheticModel::SyntheticModel(std::vector<Entry> entries) : entries_(std::move(entries)) {
  if (entries_.empty()) throw ValidationError("synthetic model has an empty support");
  double total = 0.0;
  for (const auto& e : entries_) {
    if (!(e.probability > 0.0) || !std::isfinite(e.probability))
      throw ValidationError("synthetic model probabilities must be positive and finite");
    for (const auto& t : e.tokens)
      if (t.empty() || t.find_first_of(" \t\n") != std::string::npos)
        throw ValidationError("synthetic model tokens must be non-empty and contain no whitespace");
    total += e.probability;
  }
  if (std::abs(total - 1.0) > kModelTolerance)
    throw ValidationError("synthetic model probabilities sum to " + std::to_string(total) + ", not 1");
  if (std::abs(total - 1.0) > 1e-12) {
    std::ostringstream ss;
    ss << "synthetic model probabilities sum to " << total << "; renormalizing";
    warn(ss.str());
  }
  for (auto& e : entries_) e.probability /= total;

  vocab_.push_back("</s>");
  std::map<std::string, TokenId> ids;
  nodes_.emplace_back();
  std::map<std::vector<std::string>, bool> seen;
  for (const auto& e : entries_) {
    if (seen.count(e.tokens)) throw ValidationError("synthetic model lists '" + join(e.tokens) + "' twice");
    seen[e.tokens] = true;
    max_len_ = std::max(max_len_, e.tokens.size());
    std::size_t node = 0;
    nodes_[0].mass += e.probability;
    for (const auto& t : e.tokens) {
      auto [it, inserted] = ids.try_emplace(t, static_cast<TokenId>(vocab_.size()));
      if (inserted) vocab_.push_back(t);
      const TokenId id = it->second;
      auto& children = nodes_[node].children;
      auto ct = std::lower_bound(children.begin(), children.end(), id,
                                 [](const auto& c, TokenId v) { return c.first < v; });
      std::size_t child;
      if (ct != children.end() && ct->first == id) {
        child = ct->second;
      } else {
        child = nodes_.size();
        children.insert(ct, {id, child});
        nodes_.emplace_back();
      }
      node = child;
      nodes_[node].mass += e.probability;
    }
    nodes_[node].end_mass += e.probability;
  }
}

SyntheticModel SyntheticModel::parse(std::string_view text, const std::string& source) {
  std::vector<Entry> entries;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError(source, line_no, "expected `probability<TAB>tokens`");
    Entry e;
    try {
      std::size_t pos = 0;
      e.probability = std::stod(line.substr(0, tab), &pos);
      if (pos != tab) throw std::invalid_argument("trailing characters");
    } catch (const std::logic_error&) {
      throw ParseError(source, line_no, "bad probability '" + line.substr(0, tab) + "'");
    }
    std::istringstream words(line.substr(tab + 1));
    std::string w;
    while (words >> w) e.tokens.push_back(w);
    entries.push_back(std::move(e));
  }
  try {
    return SyntheticModel(std::move(entries));
  } catch (const ValidationError& e) {
    throw ParseError(source, 0, e.what());
  }
}

SyntheticModel SyntheticModel::load(const std::filesystem::path& path) {
  return parse(read_file(path), path.string());
}

std::vector<double> SyntheticModel::conditional(std::span<const TokenId> prefix) const {
  std::size_t node = 0;
  for (TokenId t : prefix) {
    const auto& children = nodes_[node].children;
    auto it = std::lower_bound(children.begin(), children.end(), t,
                               [](const auto& c, TokenId v) { return c.first < v; });
    if (it == children.end() || it->first != t) throw ValidationError("prefix outside the model's support");
    node = it->second;
  }
  const Node& n = nodes_[node];
  std::vector<double> dist(vocab_.size(), 0.0);
  dist[0] = n.end_mass / n.mass;
  for (const auto& [tok, child] : n.children) dist[tok] = nodes_[child].mass / n.mass;
  return dist;
}

std::string SyntheticModel::detokenize(std::span<const TokenId> tokens) const {
  std::string out;
  for (TokenId t : tokens) {
    if (t >= vocab_.size()) throw ValidationError("token id out of range");
    if (!out.empty()) out.push_back(' ');
    out += vocab_[t];
  }
  return out;
}

std::vector<std::string> SyntheticModel::support_texts() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(join(e.tokens));
  return out;
}

std::vector<double> SyntheticModel::support_probabilities() const {
  std::vector<double> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.probability);
  return out;
}

std::ptrdiff_t SyntheticModel::find(std::string_view text) const {
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (join(entries_[i].tokens) == text) return static_cast<std::ptrdiff_t>(i);
  return -1;
}

// --- transform ------------------------------------------------------------------------

std::vector<double> transform_distribution(std::span<const double> p, double temperature, double epsilon) {
  check_distribution(p);
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ValidationError("temperature must be positive");
  if (!(epsilon >= 0.0 && epsilon < 1.0)) throw ValidationError("epsilon must lie in [0, 1)");

  std::vector<double> q(p.begin(), p.end());
  if (temperature != 1.0) {
    double max_log = -INFINITY;
    for (double v : q)
      if (v > 0.0) max_log = std::max(max_log, std::log(v));
    double sum = 0.0;
    for (double& v : q) {
      v = v > 0.0 ? std::exp((std::log(v) - max_log) / temperature) : 0.0;
      sum += v;
    }
    for (double& v : q) v /= sum;
  }
  if (epsilon > 0.0) {
    const std::size_t largest = static_cast<std::size_t>(std::max_element(q.begin(), q.end()) - q.begin());
    bool pruned = false;
    double kept = 0.0;
    for (double& v : q) {
      if (v > 0.0 && v < epsilon) {
        v = 0.0;
        pruned = true;
      }
      kept += v;
    }
    if (kept == 0.0) {
      std::fill(q.begin(), q.end(), 0.0);
      q[largest] = 1.0;
    } else if (pruned) {
      for (double& v : q) v /= kept;
    }
  }
  return q;
}

// --- sampling -------------------------------------------------------------------------------

Hypothesis SampledSequence::to_hypothesis() const {
  Hypothesis h;
  h.text = text;
  h.log_prob = base_log_prob;
  h.token_count = static_cast<std::int64_t>(tokens.size());
  h.external_scores["sampler_log_prob"] = log_prob;
  return h;
}

SampledSequence sample_sequence(const NextTokenModel& model, const SamplerConfig& cfg, std::uint64_t draw_index) {
  cfg.validate();
  Rng rng(cfg.seed, draw_index);
  SampledSequence out;
  const double temperature = cfg.effective_temperature();
  const double epsilon = cfg.effective_epsilon();
  for (;;) {
    const std::vector<double> base = model.conditional(out.tokens);
    if (base.size() != model.vocab_size()) throw ValidationError("model returned a distribution of the wrong size");
    const std::vector<double> q = transform_distribution(base, temperature, epsilon);
    if (out.tokens.size() >= model.max_len()) {
      // Only the end marker may follow a maximal prefix.
      for (std::size_t k = 0; k < q.size(); ++k)
        if (k != model.eos() && q[k] > 0.0) throw ValidationError("model allows tokens beyond max_len");
    }
    const double u = rng.uniform();
    double cum = 0.0;
    std::size_t pick = q.size();
    std::size_t last_positive = q.size();
    for (std::size_t k = 0; k < q.size(); ++k) {
      if (q[k] <= 0.0) continue;
      last_positive = k;
      cum += q[k];
      if (u < cum) {
        pick = k;
        break;
      }
    }
    if (pick == q.size()) pick = last_positive;  // rounding at the top of the cumulative sum
    out.log_prob += std::log(q[pick]);
    out.base_log_prob += std::log(base[pick]);
    if (pick == model.eos()) break;
    out.tokens.push_back(static_cast<TokenId>(pick));
  }
  out.text = model.detokenize(out.tokens);
  return out;
}

HypothesisSet sample_set(const NextTokenModel& model, const SamplerConfig& cfg, const std::string& utterance_id) {
  cfg.validate();
  HypothesisSet set;
  set.utterance_id = utterance_id;
  set.sampler = cfg;
  set.hypotheses.resize(static_cast<std::size_t>(cfg.num_samples));
  std::exception_ptr failure;
#pragma omp parallel for schedule(static)
  for (int i = 0; i < cfg.num_samples; ++i) {
    try {
      set.hypotheses[static_cast<std::size_t>(i)] =
          sample_sequence(model, cfg, static_cast<std::uint64_t>(i)).to_hypothesis();
    } catch (...) {
#pragma omp critical(mbrkit_sampling_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return set;
}

// --- beam search -------------------------------------------------------------------------------

std::vector<BeamResult> beam_search(const NextTokenModel& model, std::size_t width) {
  if (width == 0) throw ValidationError("beam width must be >= 1");
  struct Beam {
    std::vector<TokenId> tokens;
    double score;
  };
  auto by_score = [](const Beam& a, const Beam& b) { return a.score > b.score; };

  std::vector<Beam> live{{{}, 0.0}};
  std::vector<Beam> finished;
  while (!live.empty()) {
    std::vector<Beam> expansions;
    for (const auto& beam : live) {
      const auto dist = model.conditional(beam.tokens);
      check_distribution(dist);
      for (std::size_t k = 0; k < dist.size(); ++k) {
        if (dist[k] <= 0.0) continue;
        const double score = beam.score + std::log(dist[k]);
        if (k == model.eos()) {
          finished.push_back({beam.tokens, score});
        } else {
          Beam next{beam.tokens, score};
          next.tokens.push_back(static_cast<TokenId>(k));
          expansions.push_back(std::move(next));
        }
      }
    }
    std::stable_sort(expansions.begin(), expansions.end(), by_score);
    if (expansions.size() > width) expansions.resize(width);
    live = std::move(expansions);
    std::stable_sort(finished.begin(), finished.end(), by_score);
    if (finished.size() > width) finished.resize(width);
    // Scores only decrease along a path, so a live beam that is already
    // worse than the width-th finished result can never enter the list.
    if (finished.size() == width && !live.empty() && live.front().score < finished.back().score) break;
  }
  std::vector<BeamResult> out;
  out.reserve(finished.size());
  for (auto& f : finished) out.push_back({f.tokens, model.detokenize(f.tokens), f.score});
  return out;
}

// --- exact optimum ------------------------------------------------------------------------------

ExactOptimum exact_mbr_optimum(const SyntheticModel& model, const Utility& utility) {
  const auto texts = model.support_texts();
  if (texts.size() > kMaxEnumerableSupport)
    throw ValidationError("support of " + std::to_string(texts.size()) + " strings exceeds the enumeration cap of " +
                          std::to_string(kMaxEnumerableSupport));
  HypothesisSet set;
  set.utterance_id = "support";
  for (const auto& t : texts) set.hypotheses.push_back({t, {}, {}, {}});
  const auto weighted = dedup_weight(set);
  if (weighted.size() != texts.size()) throw ValidationError("support strings are not distinct");
  const auto matrix = utility_matrix(weighted, utility);
  const auto probs = model.support_probabilities();
  auto sel = mbr_select_expected(matrix, probs);
  ExactOptimum out;
  out.index = sel.index;
  out.text = texts[sel.index];
  out.expected_utility = sel.objectives[sel.index];
  out.expected = std::move(sel.objectives);
  return out;
}

}  // namespace mbrkit
