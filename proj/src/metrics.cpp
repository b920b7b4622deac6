#include "mbrkit/metrics.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>

#include "mbrkit/error.hpp"
#include "mbrkit/textnorm.hpp"

namespace mbrkit {

// --- error rates ------------------------------------------------------------

double corpus_error_rate(std::span<const EditStats> stats) {
  if (stats.empty()) throw UndefinedError("error rate of an empty corpus is undefined");
  std::size_t edits = 0, ref_len = 0;
  for (const auto& s : stats) {
    edits += s.distance;
    ref_len += s.ref_len;
  }
  if (ref_len == 0) throw UndefinedError("error rate is undefined when every reference is empty");
  return static_cast<double>(edits) / static_cast<double>(ref_len);
}

double corpus_error_rate(
    std::span<const std::pair<std::vector<std::string>, std::vector<std::string>>> pairs) {
  std::vector<EditStats> stats;
  stats.reserve(pairs.size());
  for (const auto& [hyp, ref] : pairs) stats.push_back(edit_distance(hyp, ref));
  return corpus_error_rate(stats);
}

double error_rate(const std::vector<std::string>& hyp, const std::vector<std::string>& ref) {
  const EditStats s = edit_distance(hyp, ref);
  return corpus_error_rate(std::span<const EditStats>(&s, 1));
}

// --- BLEU -------------------------------------------------------------------

void BleuConfig::validate() const {
  if (max_order < 1) throw ValidationError("BLEU max_order must be >= 1");
  if (smoothing == BleuSmoothing::floor && !(floor_value > 0.0))
    throw ValidationError("BLEU floor smoothing value must be > 0");
}

std::string_view to_string(BleuSmoothing s) {
  switch (s) {
    case BleuSmoothing::none: return "none";
    case BleuSmoothing::floor: return "floor";
    case BleuSmoothing::exp: return "exp";
  }
  return "?";
}

BleuSmoothing parse_bleu_smoothing(std::string_view s) {
  if (s == "none") return BleuSmoothing::none;
  if (s == "floor") return BleuSmoothing::floor;
  if (s == "exp") return BleuSmoothing::exp;
  throw ValidationError("unknown BLEU smoothing '" + std::string(s) + "'");
}

BleuStats& BleuStats::operator+=(const BleuStats& other) {
  if (other.correct.size() != correct.size()) throw ValidationError("BLEU statistics order mismatch");
  for (std::size_t n = 0; n < correct.size(); ++n) {
    correct[n] += other.correct[n];
    total[n] += other.total[n];
  }
  hyp_len += other.hyp_len;
  ref_len += other.ref_len;
  return *this;
}

namespace {

using NgramCounts = std::map<std::span<const std::string>, std::int64_t,
                             decltype([](std::span<const std::string> a, std::span<const std::string> b) {
                               return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
                             })>;

NgramCounts count_ngrams(std::span<const std::string> tokens, std::size_t order) {
  NgramCounts counts;
  if (tokens.size() < order) return counts;
  for (std::size_t i = 0; i + order <= tokens.size(); ++i) ++counts[tokens.subspan(i, order)];
  return counts;
}

std::int64_t closest_ref_len(std::int64_t hyp_len, std::span<const std::vector<std::string>> refs) {
  std::int64_t best_diff = -1, best_len = -1;
  for (const auto& ref : refs) {
    const auto len = static_cast<std::int64_t>(ref.size());
    const auto diff = std::abs(hyp_len - len);
    if (best_diff == -1 || diff < best_diff) {
      best_diff = diff;
      best_len = len;
    } else if (diff == best_diff && len < best_len) {
      best_len = len;
    }
  }
  return best_len;
}

// log of a zero precision; keeps the geometric mean at 0 without -inf.
constexpr double kLogZero = -9999999999.0;

}  // namespace

BleuStats bleu_stats(std::span<const std::string> hyp, std::span<const std::vector<std::string>> refs,
                     int max_order) {
  if (refs.empty()) throw ValidationError("BLEU needs at least one reference");
  BleuStats stats(max_order);
  stats.hyp_len = static_cast<std::int64_t>(hyp.size());
  stats.ref_len = closest_ref_len(stats.hyp_len, refs);
  for (int n = 1; n <= max_order; ++n) {
    const auto order = static_cast<std::size_t>(n);
    const NgramCounts hyp_counts = count_ngrams(hyp, order);
    NgramCounts max_ref;
    for (const auto& ref : refs) {
      for (const auto& [gram, c] : count_ngrams(ref, order)) {
        auto& slot = max_ref[gram];
        slot = std::max(slot, c);
      }
    }
    std::int64_t matched = 0;
    for (const auto& [gram, c] : hyp_counts) {
      const auto it = max_ref.find(gram);
      if (it != max_ref.end()) matched += std::min(c, it->second);
    }
    stats.correct[order - 1] = matched;
    stats.total[order - 1] = std::max<std::int64_t>(0, stats.hyp_len - n + 1);
  }
  return stats;
}

double bleu_score(const BleuStats& stats, const BleuConfig& cfg) {
  cfg.validate();
  const auto max_order = static_cast<std::size_t>(cfg.max_order);
  if (stats.correct.size() != max_order) throw ValidationError("BLEU statistics order mismatch");

  double bp = 1.0;
  if (stats.hyp_len < stats.ref_len)
    bp = stats.hyp_len > 0 ? std::exp(1.0 - static_cast<double>(stats.ref_len) / static_cast<double>(stats.hyp_len))
                           : 0.0;

  if (std::all_of(stats.correct.begin(), stats.correct.end(), [](std::int64_t c) { return c == 0; }))
    return 0.0;

  std::vector<double> precisions(max_order, 0.0);
  double smooth_mteval = 1.0;
  std::size_t eff_order = max_order;
  for (std::size_t n = 1; n <= max_order; ++n) {
    const auto total = static_cast<double>(stats.total[n - 1]);
    if (stats.total[n - 1] == 0) break;
    if (cfg.uses_effective_order()) eff_order = n;
    if (stats.correct[n - 1] == 0) {
      if (cfg.smoothing == BleuSmoothing::exp) {
        smooth_mteval *= 2.0;
        precisions[n - 1] = 100.0 / (smooth_mteval * total);
      } else if (cfg.smoothing == BleuSmoothing::floor) {
        precisions[n - 1] = 100.0 * cfg.floor_value / total;
      }
    } else {
      precisions[n - 1] = 100.0 * static_cast<double>(stats.correct[n - 1]) / total;
    }
  }
  double log_sum = 0.0;
  for (std::size_t n = 0; n < eff_order; ++n) log_sum += precisions[n] > 0.0 ? std::log(precisions[n]) : kLogZero;
  return bp * std::exp(log_sum / static_cast<double>(eff_order));
}

double sentence_bleu(std::span<const std::string> hyp, std::span<const std::vector<std::string>> refs,
                     const BleuConfig& cfg) {
  return bleu_score(bleu_stats(hyp, refs, cfg.max_order), cfg);
}

double sentence_bleu(std::string_view hyp, std::span<const std::string> refs, const BleuConfig& cfg) {
  const auto hyp_tokens = tokenize(hyp, TokenUnit::word);
  std::vector<std::vector<std::string>> ref_tokens;
  ref_tokens.reserve(refs.size());
  for (const auto& r : refs) ref_tokens.push_back(tokenize(r, TokenUnit::word));
  return sentence_bleu(hyp_tokens, ref_tokens, cfg);
}

double corpus_bleu(std::span<const std::vector<std::string>> hyps,
                   std::span<const std::vector<std::vector<std::string>>> ref_streams, BleuConfig cfg) {
  cfg.level = BleuLevel::corpus;
  if (ref_streams.empty()) throw ValidationError("corpus BLEU needs at least one reference stream");
  for (const auto& stream : ref_streams) {
    if (stream.size() != hyps.size())
      throw ValidationError("corpus BLEU: reference stream has " + std::to_string(stream.size()) +
                            " segments, hypotheses have " + std::to_string(hyps.size()));
  }
  BleuStats total(cfg.max_order);
  std::vector<std::vector<std::string>> refs(ref_streams.size());
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    for (std::size_t k = 0; k < ref_streams.size(); ++k) refs[k] = ref_streams[k][i];
    total += bleu_stats(hyps[i], refs, cfg.max_order);
  }
  return bleu_score(total, cfg);
}

NgramProfile NgramInterner::profile(std::span<const std::string> tokens) {
  NgramProfile p;
  p.length = static_cast<std::int64_t>(tokens.size());
  p.counts.resize(static_cast<std::size_t>(max_order_));
  std::vector<std::uint32_t> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) {
    auto [it, inserted] = tokens_.try_emplace(t, static_cast<std::uint32_t>(tokens_.size()));
    if (tokens_.size() >= (1u << 26)) throw Error("n-gram interner vocabulary overflow");
    ids.push_back(it->second);
  }
  // prev[i]: id of the (n-1)-gram starting at i
  std::vector<std::uint32_t> prev;
  for (int n = 1; n <= max_order_; ++n) {
    const std::size_t order = static_cast<std::size_t>(n);
    if (ids.size() < order) break;
    std::vector<std::uint32_t> cur(ids.size() - order + 1);
    for (std::size_t i = 0; i < cur.size(); ++i) {
      if (n == 1) {
        cur[i] = ids[i];
        continue;
      }
      // Unigram ids and higher-order ids live in disjoint key spaces by
      // tagging the order in the top bits of the prefix.
      const std::uint64_t key = (static_cast<std::uint64_t>(n) << 58) ^
                                (static_cast<std::uint64_t>(prev[i]) << 26) ^ ids[i + order - 1];
      auto [it, inserted] = ngrams_.try_emplace(key, static_cast<std::uint32_t>(ngrams_.size()));
      cur[i] = it->second;
    }
    std::vector<std::uint32_t> sorted = cur;
    std::sort(sorted.begin(), sorted.end());
    auto& out = p.counts[order - 1];
    for (std::size_t i = 0; i < sorted.size();) {
      std::size_t j = i;
      while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
      out.emplace_back(sorted[i], static_cast<std::int32_t>(j - i));
      i = j;
    }
    prev = std::move(cur);
  }
  return p;
}

BleuStats bleu_stats(const NgramProfile& hyp, const NgramProfile& ref, int max_order) {
  BleuStats stats(max_order);
  stats.hyp_len = hyp.length;
  stats.ref_len = ref.length;
  for (std::size_t n = 0; n < static_cast<std::size_t>(max_order); ++n) {
    stats.total[n] = std::max<std::int64_t>(0, hyp.length - static_cast<std::int64_t>(n));
    if (n >= hyp.counts.size() || n >= ref.counts.size()) continue;
    const auto& a = hyp.counts[n];
    const auto& b = ref.counts[n];
    std::int64_t matched = 0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
      if (a[i].first < b[j].first) {
        ++i;
      } else if (b[j].first < a[i].first) {
        ++j;
      } else {
        matched += std::min(a[i].second, b[j].second);
        ++i;
        ++j;
      }
    }
    stats.correct[n] = matched;
  }
  return stats;
}

// --- embeddings ---------------------------------------------------------------

EmbeddingTable EmbeddingTable::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  EmbeddingTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos) throw ParseError(path.string(), line_no, "expected `key<TAB>v1,v2,...`");
    std::vector<double> vec;
    std::string_view rest(line);
    rest.remove_prefix(tab + 1);
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      const auto field = rest.substr(0, comma);
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
      if (ec != std::errc() || ptr != field.data() + field.size())
        throw ParseError(path.string(), line_no, "bad number '" + std::string(field) + "'");
      vec.push_back(v);
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    try {
      table.add(line.substr(0, tab), std::move(vec));
    } catch (const Error& e) {
      throw ParseError(path.string(), line_no, e.what());
    }
  }
  return table;
}

void EmbeddingTable::add(std::string key, std::vector<double> vec) {
  if (vec.empty()) throw ValidationError("embedding for '" + key + "' is empty");
  if (dim_ == 0) dim_ = vec.size();
  if (vec.size() != dim_)
    throw ValidationError("embedding for '" + key + "' has dim " + std::to_string(vec.size()) + ", expected " +
                          std::to_string(dim_));
  bool nonzero = false;
  for (double v : vec) {
    if (!std::isfinite(v)) throw ValidationError("embedding for '" + key + "' has a non-finite entry");
    nonzero |= v != 0.0;
  }
  if (!nonzero) throw ValidationError("embedding for '" + key + "' is the zero vector");
  if (!table_.emplace(std::move(key), std::move(vec)).second) throw ValidationError("duplicate embedding key");
}

const std::vector<double>* EmbeddingTable::find(std::string_view key) const {
  const auto it = table_.find(std::string(key));
  return it == table_.end() ? nullptr : &it->second;
}

const std::vector<double>& EmbeddingTable::at(std::string_view key) const {
  if (const auto* v = find(key)) return *v;
  throw ValidationError("no embedding for key '" + std::string(key) + "'");
}

double cosine_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw ValidationError("cosine distance: dimension mismatch (" + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()) + ")");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw UndefinedError("cosine distance with a zero vector is undefined");
  const double cos = dot / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(1.0 - cos, 0.0, 2.0);
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw ValidationError("pearson: sequences differ in length");
  if (xs.size() < 2) throw UndefinedError("pearson needs at least two points");
  // Single-pass co-moment update.
  double mean_x = 0.0, mean_y = 0.0, m2x = 0.0, m2y = 0.0, cxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double k = static_cast<double>(i + 1);
    const double dx = xs[i] - mean_x;
    const double dy = ys[i] - mean_y;
    mean_x += dx / k;
    mean_y += dy / k;
    m2x += dx * (xs[i] - mean_x);
    m2y += dy * (ys[i] - mean_y);
    cxy += dx * (ys[i] - mean_y);
  }
  if (m2x <= 0.0 || m2y <= 0.0) throw UndefinedError("pearson correlation of a constant sequence is undefined");
  return std::clamp(cxy / std::sqrt(m2x * m2y), -1.0, 1.0);
}

}  // namespace mbrkit
