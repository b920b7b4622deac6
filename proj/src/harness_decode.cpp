#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "harness_internal.hpp"
#include "mbrkit/error.hpp"
#include "mbrkit/log.hpp"
#include "mbrkit/rng.hpp"

namespace mbrkit {

namespace fs = std::filesystem;

namespace detail {

std::string fmt(double v, int precision) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

std::string fmt_exact(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

std::vector<std::string> eval_tokens(const Normalizer& normalizer, TokenUnit unit, bool pretokenized,
                                     std::string_view raw) {
  return tokenize(normalizer.normalize(raw), pretokenized ? TokenUnit::word : unit);
}

Decoder::Decoder(const RunConfig& cfg, const std::vector<Utterance>& manifest, const std::vector<HypothesisSet>& sets)
    : cfg_(cfg), normalizer_(cfg.normalizer) {
  for (const auto& s : sets) sets_[s.utterance_id] = &s;

  std::shared_ptr<const EmbeddingTable> embeddings;
  for (const auto& m : cfg.methods)
    if (m.utility.kind == UtilityKind::embedding_cosine_similarity && !embeddings)
      embeddings = std::make_shared<const EmbeddingTable>(EmbeddingTable::load(*cfg.embeddings));

  for (const auto& m : cfg.methods) {
    Bound b;
    b.config = &m;
    if (m.type == DecodeMethod::mbr || m.type == DecodeMethod::mbr_pruned) {
      std::shared_ptr<const ExternalUtilities> external;
      if (m.external_dir) external = std::make_shared<const ExternalUtilities>(ExternalUtilities::load_dir(*m.external_dir));
      b.utility = std::make_shared<const Utility>(m.utility, embeddings, external);
      for (const auto& u : manifest) {
        auto it = sets_.find(u.id);
        if (it != sets_.end() && m.n > it->second->size())
          throw ValidationError("method " + m.name + ": n = " + std::to_string(m.n) + " but utterance " + u.id +
                                " has only " + std::to_string(it->second->size()) + " hypotheses");
      }
    }
    if (m.type == DecodeMethod::beam) {
      for (auto& s : load_hypothesis_sets(m.beam_path(cfg.base_dir))) {
        auto id = s.utterance_id;
        b.beam_sets.emplace(std::move(id), std::move(s));
      }
    }
    if (m.type == DecodeMethod::oracle) {
      for (const auto& u : manifest)
        if (!u.reference) throw ValidationError("method " + m.name + ": utterance " + u.id + " has no reference");
    }
    methods_.push_back(std::move(b));
  }
}

bool Decoder::covers(const Utterance& u) const {
  if (!sets_.count(u.id)) return false;
  for (const auto& b : methods_)
    if (b.config->type == DecodeMethod::beam && !b.beam_sets.count(u.id)) return false;
  return true;
}

DecodeResult Decoder::run(std::size_t m, const Utterance& u) const {
  const auto& b = methods_[m];
  const auto& mc = *b.config;
  const auto& set = *sets_.at(u.id);
  DecodeResult r;
  switch (mc.type) {
    case DecodeMethod::map:
      r = map_select(set, mc.length_normalize);
      break;
    case DecodeMethod::beam:
      r = beam_select(b.beam_sets.at(u.id));
      break;
    case DecodeMethod::weighted:
      r = weighted_select(set, mc.weighted);
      break;
    case DecodeMethod::oracle:
      r = oracle_select(set, *u.reference, normalizer_, cfg_.pretokenized ? TokenUnit::word : cfg_.unit);
      break;
    case DecodeMethod::mbr: {
      const auto sub = set.prefix(mc.n == 0 ? set.size() : mc.n);
      const auto weighted = dedup_weight(sub);
      const auto matrix = utility_matrix(weighted, *b.utility);
      const auto weights = weighted.weights();
      const auto sel = mbr_select(matrix, weights);
      r.utterance_id = set.utterance_id;
      r.method = DecodeMethod::mbr;
      r.chosen_index = weighted.items[sel.index].first_index;
      r.chosen_text = weighted.items[sel.index].hypothesis.text;
      r.objective = sel.objectives[sel.index];
      // One objective per sample position; repeats share their item's value.
      std::vector<double> per(sub.size());
      for (std::size_t k = 0; k < sub.size(); ++k) {
        for (std::size_t i = 0; i < weighted.size(); ++i)
          if (weighted.items[i].hypothesis.text == sub.hypotheses[k].text) {
            per[k] = sel.objectives[i];
            break;
          }
      }
      r.per_candidate_objective = std::move(per);
      r.utility_evaluations = matrix.evaluations;
      break;
    }
    case DecodeMethod::mbr_pruned: {
      const auto sub = set.prefix(mc.n == 0 ? set.size() : mc.n);
      const auto weighted = dedup_weight(sub);
      const auto sel = mbr_select_pruned(weighted, *b.utility, mc.schedule, mix64(cfg_.seed ^ fnv1a64(u.id)));
      r.utterance_id = set.utterance_id;
      r.method = DecodeMethod::mbr_pruned;
      r.chosen_index = weighted.items[sel.index].first_index;
      r.chosen_text = weighted.items[sel.index].hypothesis.text;
      r.objective = sel.objective;
      r.utility_evaluations = sel.evaluations;
      break;
    }
  }
  r.label = mc.name;
  return r;
}

}  // namespace detail

namespace {

std::vector<Utterance> require_manifest(const RunConfig& cfg) {
  if (!cfg.manifest) throw ValidationError("config: 'manifest' is required for this command");
  return load_manifest(*cfg.manifest);
}

std::vector<HypothesisSet> require_sets(const RunConfig& cfg) {
  if (!cfg.hypotheses) throw ValidationError("config: 'hypotheses' is required for this command");
  return load_hypothesis_sets(*cfg.hypotheses);
}

double median_of(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const auto h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

}  // namespace

DecodeOutput run_decode(const RunConfig& cfg) {
  if (cfg.methods.empty()) throw ValidationError("config: no methods configured");
  const auto manifest = require_manifest(cfg);
  const auto sets = require_sets(cfg);
  set_workers(cfg.workers);
  const detail::Decoder decoder(cfg, manifest, sets);

  const std::size_t nm = decoder.method_count();
  std::vector<std::vector<DecodeResult>> per_utt(manifest.size());
  std::vector<char> covered(manifest.size(), 0);
  detail::parallel_for(manifest.size(), [&](std::size_t i) {
    const auto& u = manifest[i];
    if (!decoder.covers(u)) return;
    covered[i] = 1;
    per_utt[i].reserve(nm);
    for (std::size_t m = 0; m < nm; ++m) per_utt[i].push_back(decoder.run(m, u));
  });

  DecodeOutput out;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    if (!covered[i]) {
      ++out.skipped;
      out.skipped_ids.push_back(manifest[i].id);
      continue;
    }
    for (auto& r : per_utt[i]) out.results.push_back(std::move(r));
  }
  return out;
}

int cmd_decode(const RunConfig& cfg) {
  const auto out = run_decode(cfg);
  save_decode_results(cfg.output_dir / "decode.jsonl", out.results);
  std::string skipped;
  for (const auto& id : out.skipped_ids) skipped += id + "\n";
  detail::write_text(cfg.output_dir / "decode_skipped.txt", skipped);
  std::cout << "decoded " << out.results.size() << " results; skipped " << out.skipped << " utterances\n";
  if (out.skipped) {
    warn(std::to_string(out.skipped) + " utterances have no hypothesis set and were skipped");
    return kExitPartial;
  }
  return kExitOk;
}

// --- bench ----------------------------------------------------------------------

BenchReport run_bench(const RunConfig& cfg) {
  if (cfg.methods.empty()) throw ValidationError("config: no methods configured");
  const auto manifest = require_manifest(cfg);
  const auto sets = require_sets(cfg);
  set_workers(cfg.workers);
  const detail::Decoder decoder(cfg, manifest, sets);

  std::vector<const Utterance*> utts;
  for (const auto& u : manifest)
    if (decoder.covers(u)) utts.push_back(&u);
  if (utts.empty()) throw ValidationError("bench: no utterance has a hypothesis set");

  BenchReport report;
  for (std::size_t m = 0; m < decoder.method_count(); ++m) {
    BenchRow row;
    row.method = decoder.method(m).name;
    std::uint64_t evals = 0;
    for (std::size_t rep = 0; rep < cfg.bench_repetitions; ++rep) {
      evals = 0;
      const auto start = std::chrono::steady_clock::now();
      for (const auto* u : utts) {
        const auto r = decoder.run(m, *u);
        evals += r.utility_evaluations.value_or(0);
      }
      const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
      row.seconds_per_utterance.push_back(elapsed.count() / static_cast<double>(utts.size()));
    }
    double sum = 0.0;
    for (double s : row.seconds_per_utterance) sum += s;
    row.mean = sum / static_cast<double>(row.seconds_per_utterance.size());
    row.median = median_of(row.seconds_per_utterance);
    row.evaluations_per_utterance = static_cast<double>(evals) / static_cast<double>(utts.size());
    report.rows.push_back(std::move(row));
  }

  // Pair the first pruned method with an exact method of the same n.
  for (std::size_t p = 0; p < decoder.method_count() && !report.pruned_speedup; ++p) {
    if (decoder.method(p).type != DecodeMethod::mbr_pruned) continue;
    for (std::size_t e = 0; e < decoder.method_count(); ++e) {
      if (decoder.method(e).type != DecodeMethod::mbr || decoder.method(e).n != decoder.method(p).n) continue;
      report.pruned_speedup = report.rows[e].mean / report.rows[p].mean;
      report.pruned_evaluation_ratio =
          report.rows[p].evaluations_per_utterance / report.rows[e].evaluations_per_utterance;
      break;
    }
  }
  return report;
}

int cmd_bench(const RunConfig& cfg) {
  const auto report = run_bench(cfg);
  std::ostringstream tsv;
  tsv << "method\trepetition\tseconds_per_utterance\n";
  for (const auto& r : report.rows)
    for (std::size_t k = 0; k < r.seconds_per_utterance.size(); ++k)
      tsv << r.method << '\t' << k + 1 << '\t' << detail::fmt_exact(r.seconds_per_utterance[k]) << '\n';
  detail::write_text(cfg.output_dir / "bench_runs.tsv", tsv.str());

  std::ostringstream sum;
  std::ostringstream txt;
  sum << "method\tmean_seconds\tmedian_seconds\tevaluations_per_utterance\n";
  char line[256];
  std::snprintf(line, sizeof line, "%-20s %14s %14s %14s\n", "method", "mean s/utt", "median s/utt", "evals/utt");
  txt << line;
  for (const auto& r : report.rows) {
    sum << r.method << '\t' << detail::fmt_exact(r.mean) << '\t' << detail::fmt_exact(r.median) << '\t'
        << detail::fmt(r.evaluations_per_utterance, 1) << '\n';
    std::snprintf(line, sizeof line, "%-20s %14.6g %14.6g %14.1f\n", r.method.c_str(), r.mean, r.median,
                  r.evaluations_per_utterance);
    txt << line;
  }
  if (report.pruned_speedup) {
    txt << "pruned speedup: " << detail::fmt(*report.pruned_speedup, 3) << "x, evaluation ratio "
        << detail::fmt(*report.pruned_evaluation_ratio, 4) << '\n';
    sum << "# pruned_speedup\t" << detail::fmt_exact(*report.pruned_speedup) << '\n';
    sum << "# pruned_evaluation_ratio\t" << detail::fmt_exact(*report.pruned_evaluation_ratio) << '\n';
  }
  detail::write_text(cfg.output_dir / "bench.tsv", sum.str());
  detail::write_text(cfg.output_dir / "bench.txt", txt.str());
  std::cout << txt.str();
  return kExitOk;
}

}  // namespace mbrkit
