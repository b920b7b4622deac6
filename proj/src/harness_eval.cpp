#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "harness_internal.hpp"
#include "mbrkit/error.hpp"
#include "mbrkit/log.hpp"
#include "mbrkit/metrics.hpp"

namespace mbrkit {

namespace fs = std::filesystem;

std::string length_bucket(std::size_t ref_words) {
  if (ref_words == 0) return "0";
  const std::size_t lo = (ref_words - 1) / 5 * 5;
  return "(" + std::to_string(lo) + ", " + std::to_string(lo + 5) + "]";
}

const MethodSummary& EvalReport::method(const std::string& name) const {
  for (const auto& m : methods)
    if (m.method == name) return m;
  throw ValidationError("report has no method '" + name + "'");
}

EvalReport evaluate(const RunConfig& cfg, const std::vector<DecodeResult>& results,
                    const std::vector<Utterance>& manifest) {
  const Normalizer normalizer(cfg.normalizer);
  std::map<std::string, std::size_t> utt_pos;
  for (std::size_t i = 0; i < manifest.size(); ++i) utt_pos[manifest[i].id] = i;

  std::shared_ptr<const EmbeddingTable> embeddings;
  if (cfg.embeddings) embeddings = std::make_shared<const EmbeddingTable>(EmbeddingTable::load(*cfg.embeddings));

  // Methods in order of first appearance; rows in manifest order per method.
  std::vector<std::string> labels;
  std::map<std::string, std::vector<const DecodeResult*>> by_label;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& r : results) {
    if (!utt_pos.count(r.utterance_id))
      throw ValidationError("result for utterance '" + r.utterance_id + "' is not in the manifest");
    if (!manifest[utt_pos[r.utterance_id]].reference)
      throw ValidationError("utterance '" + r.utterance_id + "' has no reference");
    if (!seen.insert({r.utterance_id, r.label}).second)
      throw ValidationError("duplicate result for utterance '" + r.utterance_id + "' and method '" + r.label + "'");
    if (!by_label.count(r.label)) labels.push_back(r.label);
    by_label[r.label].push_back(&r);
  }
  for (auto& [label, rs] : by_label)
    std::stable_sort(rs.begin(), rs.end(), [&](const DecodeResult* a, const DecodeResult* b) {
      return utt_pos.at(a->utterance_id) < utt_pos.at(b->utterance_id);
    });

  // Reference tokens are shared by every method.
  std::vector<std::vector<std::string>> ref_tokens(manifest.size());
  detail::parallel_for(manifest.size(), [&](std::size_t i) {
    if (!manifest[i].reference) return;
    ref_tokens[i] = detail::eval_tokens(normalizer, cfg.unit, cfg.pretokenized, *manifest[i].reference);
  });

  EvalReport report;
  report.config_digest = cfg.digest();
  const BleuConfig bleu_cfg;
  for (const auto& label : labels) {
    const auto& rs = by_label[label];
    std::vector<EvalRow> rows(rs.size());
    std::vector<std::vector<std::string>> hyp_tokens(rs.size());
    detail::parallel_for(rs.size(), [&](std::size_t k) {
      const auto& r = *rs[k];
      const auto ui = utt_pos.at(r.utterance_id);
      const auto& ref = ref_tokens[ui];
      if (ref.empty()) throw UndefinedError("reference of '" + r.utterance_id + "' is empty after normalization");
      hyp_tokens[k] = detail::eval_tokens(normalizer, cfg.unit, cfg.pretokenized, r.chosen_text);
      auto& row = rows[k];
      row.utterance_id = r.utterance_id;
      row.method = label;
      row.chosen_index = r.chosen_index;
      row.chosen_text = r.chosen_text;
      const auto es = edit_distance(hyp_tokens[k], ref);
      row.edits = es.distance;
      row.ref_len = es.ref_len;
      row.error_rate = static_cast<double>(es.distance) / static_cast<double>(es.ref_len);
      const std::vector<std::vector<std::string>> refs{ref};
      row.sentence_bleu = sentence_bleu(hyp_tokens[k], refs, bleu_cfg);
      if (embeddings) {
        const auto* h = embeddings->find(r.chosen_text);
        const auto* g = embeddings->find(*manifest[ui].reference);
        if (!h) throw ValidationError("no embedding for hypothesis text of '" + r.utterance_id + "'");
        if (!g) throw ValidationError("no embedding for reference text of '" + r.utterance_id + "'");
        row.semdist = cosine_distance(*h, *g);
      }
      row.ref_words = ref.size();
      row.bucket = length_bucket(row.ref_words);
    });

    MethodSummary summary;
    summary.method = label;
    summary.utterances = rows.size();
    std::vector<EditStats> stats;
    std::vector<std::vector<std::string>> refs;
    double semdist_sum = 0.0;
    std::map<std::size_t, std::pair<std::size_t, std::vector<EditStats>>> buckets;
    for (std::size_t k = 0; k < rows.size(); ++k) {
      stats.push_back({rows[k].edits, rows[k].ref_len});
      refs.push_back(ref_tokens[utt_pos.at(rows[k].utterance_id)]);
      if (rows[k].semdist) semdist_sum += *rows[k].semdist;
      auto& b = buckets[(rows[k].ref_words + 4) / 5];
      ++b.first;
      b.second.push_back(stats.back());
    }
    summary.error_rate = corpus_error_rate(stats);
    const std::vector<std::vector<std::vector<std::string>>> streams{refs};
    summary.corpus_bleu = corpus_bleu(hyp_tokens, streams, bleu_cfg);
    if (embeddings) summary.semdist = semdist_sum / static_cast<double>(rows.size());
    for (const auto& [key, b] : buckets) {
      BucketSummary bs;
      bs.method = label;
      bs.bucket = length_bucket(key * 5);
      bs.utterances = b.first;
      bs.error_rate = corpus_error_rate(b.second);
      report.buckets.push_back(bs);
    }
    report.methods.push_back(summary);
    for (auto& row : rows) report.rows.push_back(std::move(row));
  }
  return report;
}

namespace {

std::string tsv_escape(std::string s) {
  for (auto& c : s)
    if (c == '\t' || c == '\n' || c == '\r') c = ' ';
  return s;
}

}  // namespace

void write_report(const fs::path& dir, const EvalReport& report) {
  const std::string meta = "# version " + report.version + "\n# config " + report.config_digest + "\n";

  std::ostringstream txt;
  txt << meta << '\n';
  char line[512];
  std::snprintf(line, sizeof line, "%-20s %6s %10s %10s %10s\n", "method", "utts", "error_rate", "bleu", "semdist");
  txt << line;
  for (const auto& m : report.methods) {
    std::snprintf(line, sizeof line, "%-20s %6zu %10.4f %10.2f %10s\n", m.method.c_str(), m.utterances, m.error_rate,
                  m.corpus_bleu, m.semdist ? detail::fmt(*m.semdist, 4).c_str() : "-");
    txt << line;
  }
  txt << "\nerror rate by reference length\n";
  std::snprintf(line, sizeof line, "%-20s %-12s %6s %10s\n", "method", "bucket", "utts", "error_rate");
  txt << line;
  for (const auto& b : report.buckets) {
    std::snprintf(line, sizeof line, "%-20s %-12s %6zu %10.4f\n", b.method.c_str(), b.bucket.c_str(), b.utterances,
                  b.error_rate);
    txt << line;
  }
  detail::write_text(dir / "report.txt", txt.str());

  std::ostringstream summary;
  summary << meta << "method\tutterances\terror_rate\tcorpus_bleu\tsemdist\n";
  for (const auto& m : report.methods)
    summary << m.method << '\t' << m.utterances << '\t' << detail::fmt_exact(m.error_rate) << '\t'
            << detail::fmt_exact(m.corpus_bleu) << '\t' << (m.semdist ? detail::fmt_exact(*m.semdist) : "") << '\n';
  detail::write_text(dir / "summary.tsv", summary.str());

  std::ostringstream rows;
  rows << meta
       << "utterance_id\tmethod\tchosen_index\tedits\tref_len\terror_rate\tsentence_bleu\tsemdist\tref_words\tbucket\t"
          "chosen_text\n";
  for (const auto& r : report.rows)
    rows << r.utterance_id << '\t' << r.method << '\t' << r.chosen_index << '\t' << r.edits << '\t' << r.ref_len
         << '\t' << detail::fmt_exact(r.error_rate) << '\t' << detail::fmt_exact(r.sentence_bleu) << '\t'
         << (r.semdist ? detail::fmt_exact(*r.semdist) : "") << '\t' << r.ref_words << '\t' << r.bucket << '\t'
         << tsv_escape(r.chosen_text) << '\n';
  detail::write_text(dir / "rows.tsv", rows.str());

  std::ostringstream buckets;
  buckets << meta << "method\tbucket\tutterances\terror_rate\n";
  for (const auto& b : report.buckets)
    buckets << b.method << '\t' << b.bucket << '\t' << b.utterances << '\t' << detail::fmt_exact(b.error_rate) << '\n';
  detail::write_text(dir / "buckets.tsv", buckets.str());
}

int cmd_evaluate(const RunConfig& cfg) {
  if (!cfg.manifest) throw ValidationError("config: 'manifest' is required for evaluate");
  set_workers(cfg.workers);
  const auto manifest = load_manifest(*cfg.manifest);
  const auto results = load_decode_results(cfg.decode_results_path());
  const auto report = evaluate(cfg, results, manifest);
  write_report(cfg.output_dir, report);
  std::cout << read_file(cfg.output_dir / "report.txt");
  return kExitOk;
}

// --- correlate ------------------------------------------------------------------

CorrelationSummary correlate(const RunConfig& cfg, const std::vector<Utterance>& manifest,
                             const std::vector<HypothesisSet>& sets) {
  const Normalizer normalizer(cfg.normalizer);
  std::shared_ptr<const EmbeddingTable> embeddings;
  if (cfg.correlate.utility.kind == UtilityKind::embedding_cosine_similarity) {
    if (!cfg.embeddings) throw ValidationError("correlate: embedding utility needs 'embeddings'");
    embeddings = std::make_shared<const EmbeddingTable>(EmbeddingTable::load(*cfg.embeddings));
  }
  if (cfg.correlate.utility.kind == UtilityKind::external_matrix)
    throw ValidationError("correlate: external_matrix utility is not supported here");
  const Utility utility(cfg.correlate.utility, embeddings);

  std::map<std::string, const HypothesisSet*> by_id;
  for (const auto& s : sets) by_id[s.utterance_id] = &s;

  enum class Status { missing, skipped, used };
  std::vector<Status> status(manifest.size(), Status::missing);
  std::vector<double> r(manifest.size(), 0.0);
  detail::parallel_for(manifest.size(), [&](std::size_t i) {
    const auto& u = manifest[i];
    auto it = by_id.find(u.id);
    if (it == by_id.end() || !u.reference) return;
    const auto& full = *it->second;
    const std::size_t n = cfg.correlate.n == 0 ? full.size() : std::min(cfg.correlate.n, full.size());
    status[i] = Status::skipped;
    if (n < 2) return;
    const auto set = full.prefix(n);
    const auto ref = detail::eval_tokens(normalizer, cfg.unit, cfg.pretokenized, *u.reference);
    if (ref.empty()) return;
    const auto weighted = dedup_weight(set);
    const auto sel = mbr_select(utility_matrix(weighted, utility), weighted.weights());
    std::map<std::string, std::size_t> item_of;
    for (std::size_t k = 0; k < weighted.size(); ++k) item_of.emplace(weighted.items[k].hypothesis.text, k);
    std::vector<double> objective(n), wer(n);
    for (std::size_t k = 0; k < n; ++k) {
      objective[k] = sel.objectives[item_of.at(set.hypotheses[k].text)];
      wer[k] = error_rate(detail::eval_tokens(normalizer, cfg.unit, cfg.pretokenized, set.hypotheses[k].text), ref);
    }
    try {
      r[i] = pearson(objective, wer);
      status[i] = Status::used;
    } catch (const UndefinedError&) {
    }
  });

  CorrelationSummary out;
  std::size_t missing = 0;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    if (status[i] == Status::missing) {
      ++missing;
    } else if (status[i] == Status::skipped) {
      ++out.skipped;
    } else {
      out.per_instance.emplace_back(manifest[i].id, r[i]);
    }
  }
  out.instances = out.per_instance.size();
  if (out.instances == 0) throw UndefinedError("correlate: no usable instance");
  double sum = 0.0;
  for (const auto& [id, v] : out.per_instance) sum += v;
  out.mean_r = sum / static_cast<double>(out.instances);
  if (out.instances > 1) {
    double ss = 0.0;
    for (const auto& [id, v] : out.per_instance) ss += (v - out.mean_r) * (v - out.mean_r);
    const double sd = std::sqrt(ss / static_cast<double>(out.instances - 1));
    out.standard_error = sd / std::sqrt(static_cast<double>(out.instances));
  } else {
    out.standard_error = std::nan("");
  }
  if (missing) warn(std::to_string(missing) + " utterances lack a hypothesis set or reference");
  return out;
}

int cmd_correlate(const RunConfig& cfg) {
  if (!cfg.manifest || !cfg.hypotheses) throw ValidationError("config: correlate needs 'manifest' and 'hypotheses'");
  set_workers(cfg.workers);
  const auto manifest = load_manifest(*cfg.manifest);
  const auto sets = load_hypothesis_sets(*cfg.hypotheses);
  const auto s = correlate(cfg, manifest, sets);

  std::ostringstream tsv;
  tsv << "utterance_id\tpearson_r\n";
  for (const auto& [id, v] : s.per_instance) tsv << id << '\t' << detail::fmt_exact(v) << '\n';
  detail::write_text(cfg.output_dir / "correlate.tsv", tsv.str());

  std::ostringstream txt;
  txt << "# version " << kToolkitVersion << "\n# config " << cfg.digest() << "\n";
  txt << "instances\t" << s.instances << "\nskipped\t" << s.skipped << "\nmean_r\t" << detail::fmt_exact(s.mean_r)
      << "\nstandard_error\t" << detail::fmt_exact(s.standard_error) << '\n';
  detail::write_text(cfg.output_dir / "correlate_summary.tsv", txt.str());
  std::cout << "mean r = " << detail::fmt(s.mean_r, 4) << " (standard error " << detail::fmt(s.standard_error, 4)
            << ") over " << s.instances << " instances, " << s.skipped << " skipped\n";
  const std::size_t missing = manifest.size() - s.instances - s.skipped;
  return missing ? kExitPartial : kExitOk;
}

}  // namespace mbrkit
