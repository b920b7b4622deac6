#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "harness_internal.hpp"
#include "mbrkit/audio.hpp"
#include "mbrkit/error.hpp"
#include "mbrkit/log.hpp"
#include "mbrkit/rng.hpp"

namespace mbrkit {

namespace fs = std::filesystem;

// --- simulate -------------------------------------------------------------------

namespace {

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

}  // namespace

RegretTable simulate_regret(const SyntheticModel& model, const Utility& utility, const SimulateConfig& cfg) {
  const auto exact = exact_mbr_optimum(model, utility);
  const auto texts = model.support_texts();

  // Utility values for every support pair; samples are looked up here.
  HypothesisSet support;
  support.utterance_id = "support";
  for (const auto& t : texts) support.hypotheses.push_back({t, {}, {}, {}});
  const auto full = utility_matrix(dedup_weight(support), utility);

  RegretTable table;
  table.optimum_text = exact.text;
  table.optimum_expected_utility = exact.expected_utility;

  auto regret_of = [&](std::size_t chosen) { return exact.expected_utility - exact.expected[chosen]; };

  // Regret of MBR over a multiset of support indices (in draw order).
  auto select = [&](const std::vector<std::size_t>& draws) {
    std::vector<std::size_t> order;
    std::map<std::size_t, int> count;
    for (auto d : draws)
      if (count[d]++ == 0) order.push_back(d);
    UtilityMatrix m;
    m.n = order.size();
    m.values.resize(m.n * m.n);
    for (std::size_t i = 0; i < m.n; ++i)
      for (std::size_t j = 0; j < m.n; ++j) m.values[i * m.n + j] = full(order[i], order[j]);
    std::vector<int> weights;
    for (auto d : order) weights.push_back(count[d]);
    return order[mbr_select(m, weights).index];
  };

  const std::size_t max_n = cfg.n_grid.back();
  std::vector<std::vector<double>> regrets(cfg.n_grid.size(), std::vector<double>(cfg.seeds));
  if (cfg.enumerate) {
    // Whole support weighted by probability: the exact optimum for every N.
    const auto sel = mbr_select_expected(full, model.support_probabilities());
    for (auto& row : regrets) std::fill(row.begin(), row.end(), regret_of(sel.index));
  } else {
    detail::parallel_for(cfg.seeds, [&](std::size_t k) {
      SamplerConfig sc = cfg.sampler;
      sc.seed = mix64(cfg.sampler.seed ^ mix64(k + 1));
      sc.num_samples = static_cast<int>(max_n);
      std::vector<std::size_t> draws;
      draws.reserve(max_n);
      for (std::size_t d = 0; d < max_n; ++d) {
        const auto seq = sample_sequence(model, sc, d);
        const auto idx = model.find(seq.text);
        if (idx < 0) throw Error("sampled text outside the model support: " + seq.text);
        draws.push_back(static_cast<std::size_t>(idx));
      }
      for (std::size_t g = 0; g < cfg.n_grid.size(); ++g) {
        const std::vector<std::size_t> prefix(draws.begin(), draws.begin() + static_cast<std::ptrdiff_t>(cfg.n_grid[g]));
        regrets[g][k] = regret_of(select(prefix));
      }
    });
  }

  for (std::size_t g = 0; g < cfg.n_grid.size(); ++g) {
    RegretRow row;
    row.n = cfg.n_grid[g];
    row.regrets = regrets[g];
    row.median = median_of(row.regrets);
    double sum = 0.0;
    for (double v : row.regrets) sum += v;
    row.mean = sum / static_cast<double>(row.regrets.size());
    table.rows.push_back(std::move(row));
  }
  for (std::size_t g = 1; g < table.rows.size(); ++g)
    if (table.rows[g].median > table.rows[g - 1].median) ++table.inversions;
  table.monotone = table.inversions <= 1;
  return table;
}

int cmd_simulate(const RunConfig& cfg) {
  if (!cfg.simulate.model) throw ValidationError("config: simulate needs 'simulate.model'");
  set_workers(cfg.workers);
  const auto model = SyntheticModel::load(*cfg.simulate.model);
  const Utility utility(cfg.simulate.utility);
  const auto table = simulate_regret(model, utility, cfg.simulate);

  std::ostringstream tsv;
  tsv << "# version " << kToolkitVersion << "\n# config " << cfg.digest() << "\n";
  tsv << "n\tmedian_regret\tmean_regret\n";
  for (const auto& r : table.rows)
    tsv << r.n << '\t' << detail::fmt_exact(r.median) << '\t' << detail::fmt_exact(r.mean) << '\n';
  detail::write_text(cfg.output_dir / "simulate.tsv", tsv.str());

  std::ostringstream txt;
  txt << "optimum: " << table.optimum_text << " (expected utility " << detail::fmt(table.optimum_expected_utility, 4)
      << ")\n";
  for (const auto& r : table.rows)
    txt << "N=" << r.n << "\tmedian " << detail::fmt(r.median, 4) << "\tmean " << detail::fmt(r.mean, 4) << '\n';
  txt << "inversions: " << table.inversions << "; median regret " << (table.monotone ? "is" : "is not")
      << " nonincreasing within one inversion\n";
  detail::write_text(cfg.output_dir / "simulate.txt", txt.str());
  std::cout << txt.str();
  return kExitOk;
}

// --- mix-noise ------------------------------------------------------------------

std::size_t pick_noise(const NoiseConfig& noise, std::size_t noise_count, const std::string& utterance_id) {
  if (noise_count == 0) throw ValidationError("no noise files configured");
  Rng rng(noise.seed ^ fnv1a64(utterance_id), 0);
  return static_cast<std::size_t>(rng.below(noise_count));
}

namespace {

std::vector<fs::path> noise_files(const NoiseConfig& noise) {
  auto files = noise.paths;
  if (noise.dir) {
    std::vector<fs::path> found;
    for (const auto& e : fs::directory_iterator(*noise.dir))
      if (e.is_regular_file() && e.path().extension() == ".wav") found.push_back(e.path());
    std::sort(found.begin(), found.end());
    files.insert(files.end(), found.begin(), found.end());
  }
  if (files.empty()) throw ValidationError("config: noise needs 'paths' or a 'dir' with .wav files");
  return files;
}

std::string file_stem_for(const std::string& id) {
  std::string s = id;
  for (auto& c : s)
    if (c == '/' || c == '\\' || c == ':') c = '_';
  if (s == "." || s == "..") s = "_" + s;
  return s;
}

}  // namespace

MixOutcome mix_noise(const RunConfig& cfg) {
  if (!cfg.manifest) throw ValidationError("config: 'manifest' is required for mix-noise");
  set_workers(cfg.workers);
  const auto manifest = load_manifest(*cfg.manifest);
  const auto files = noise_files(cfg.noise);
  std::vector<AudioBuffer> noises;
  for (const auto& f : files) {
    noises.push_back(read_wav(f));
    if (noises.back().samples.empty()) throw ValidationError("noise file is empty: " + f.string());
  }
  const fs::path manifest_dir = cfg.manifest->parent_path();

  std::vector<std::optional<Utterance>> mixed(manifest.size());
  std::vector<std::string> failure(manifest.size());
  std::vector<char> clipped(manifest.size(), 0);
  detail::parallel_for(manifest.size(), [&](std::size_t i) {
    const auto& u = manifest[i];
    try {
      if (!u.audio_path) throw Error("no audio path");
      const fs::path in = fs::path(*u.audio_path).is_absolute() ? fs::path(*u.audio_path) : manifest_dir / *u.audio_path;
      const auto speech = read_wav(in);
      const auto k = pick_noise(cfg.noise, noises.size(), u.id);
      if (noises[k].sample_rate != speech.sample_rate)
        throw Error("sample rate " + std::to_string(speech.sample_rate) + " differs from noise file " +
                    files[k].string());
      Rng rng(cfg.noise.seed ^ fnv1a64(u.id), 1);
      const auto noise = fit_length(noises[k], speech.samples.size(), rng);
      const auto result = mix_at_snr(speech, noise, cfg.noise.snr_db);
      const fs::path rel = fs::path("audio") / (file_stem_for(u.id) + ".wav");
      const auto n_clipped = write_wav(cfg.output_dir / rel, result.mixed);
      clipped[i] = n_clipped > 0;
      Utterance out = u;
      out.audio_path = rel.generic_string();
      mixed[i] = std::move(out);
    } catch (const std::exception& e) {
      failure[i] = e.what();
    }
  });

  MixOutcome out;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    if (mixed[i]) {
      out.manifest.push_back(*mixed[i]);
      if (clipped[i]) {
        ++out.clipped_files;
        warn("mixed audio for " + manifest[i].id + " was clipped");
      }
    } else {
      out.failures.emplace_back(manifest[i].id, failure[i]);
    }
  }
  return out;
}

int cmd_mix_noise(const RunConfig& cfg) {
  const auto out = mix_noise(cfg);
  save_manifest(cfg.output_dir / "manifest.tsv", out.manifest);
  std::ostringstream fail;
  for (const auto& [id, why] : out.failures) fail << id << '\t' << why << '\n';
  detail::write_text(cfg.output_dir / "mix_failures.tsv", fail.str());
  std::cout << "mixed " << out.manifest.size() << " utterances at " << cfg.noise.snr_db << " dB; "
            << out.failures.size() << " failed; " << out.clipped_files << " clipped\n";
  for (const auto& [id, why] : out.failures) std::cout << "  failed " << id << ": " << why << '\n';
  return out.failures.empty() ? kExitOk : kExitPartial;
}

// --- merge-scores ---------------------------------------------------------------

void merge_scores(std::vector<HypothesisSet>& sets, const fs::path& scores_path) {
  std::map<std::string, HypothesisSet*> by_id;
  for (auto& s : sets) by_id[s.utterance_id] = &s;
  std::ifstream in(scores_path);
  if (!in) throw Error("cannot open " + scores_path.string());
  const std::string src = scores_path.string();
  std::set<std::tuple<std::string, std::string, std::size_t>> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    for (;;) {
      const auto tab = line.find('\t', start);
      f.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (f.size() != 4) throw ParseError(src, line_no, "expected key, utterance id, index and value");
    auto it = by_id.find(f[1]);
    if (it == by_id.end()) throw ParseError(src, line_no, "unknown utterance '" + f[1] + "'");
    std::size_t idx = 0;
    double value = 0.0;
    try {
      std::size_t used = 0;
      idx = std::stoul(f[2], &used);
      if (used != f[2].size()) throw std::invalid_argument("index");
      value = std::stod(f[3], &used);
      if (used != f[3].size()) throw std::invalid_argument("value");
    } catch (const std::exception&) {
      throw ParseError(src, line_no, "malformed index or value");
    }
    if (!std::isfinite(value)) throw ParseError(src, line_no, "score must be finite");
    if (f[0].empty()) throw ParseError(src, line_no, "empty score key");
    if (idx >= it->second->size()) throw ParseError(src, line_no, "hypothesis index out of range");
    if (!seen.insert({f[0], f[1], idx}).second) throw ParseError(src, line_no, "duplicate score");
    it->second->hypotheses[idx].external_scores[f[0]] = value;
  }
}

int cmd_merge_scores(const RunConfig& cfg, const fs::path& scores_path) {
  if (!cfg.hypotheses) throw ValidationError("config: 'hypotheses' is required for merge-scores");
  auto sets = load_hypothesis_sets(*cfg.hypotheses);
  merge_scores(sets, scores_path);
  save_hypothesis_sets(cfg.output_dir / "hypotheses.jsonl", sets);
  std::cout << "merged scores into " << sets.size() << " hypothesis sets\n";
  return kExitOk;
}

}  // namespace mbrkit
