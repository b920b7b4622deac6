#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "harness_internal.hpp"
#include "mbrkit/error.hpp"
#include "mbrkit/harness.hpp"
#include "mbrkit/rng.hpp"

namespace mbrkit {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ValidationError(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw ValidationError(where + ": unknown key '" + key + "'");
  }
}

template <class T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(where + "." + key + ": " + e.what());
  }
}

std::size_t get_count(const json& j, const char* key, std::size_t fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0)
    throw ValidationError(where + "." + key + ": expected a non-negative integer");
  return v.get<std::size_t>();
}

NormalizerSpec parse_normalizer(const json& j, const RunConfig& cfg, const std::string& where) {
  NormalizerSpec spec;
  if (j.is_string()) {
    spec.kind = parse_normalizer_kind(j.get<std::string>());
    return spec;
  }
  check_keys(j, where, {"kind", "rules"});
  spec.kind = parse_normalizer_kind(get_or<std::string>(j, "kind", "basic", where));
  if (j.contains("rules")) spec.rules_path = cfg.resolve(get_or<std::string>(j, "rules", "", where));
  return spec;
}

UtilitySpec parse_utility(const json& j, const RunConfig& cfg, const std::string& where) {
  UtilitySpec spec;
  spec.normalizer = cfg.normalizer;
  spec.unit = cfg.unit;
  spec.pretokenized = cfg.pretokenized;
  if (j.is_null()) return spec;
  check_keys(j, where,
             {"kind", "max_order", "smoothing", "floor", "effective_order", "normalizer", "token_unit",
              "pretokenized"});
  spec.kind = parse_utility_kind(get_or<std::string>(j, "kind", "bleu_sentence", where));
  spec.bleu.max_order = get_or<int>(j, "max_order", spec.bleu.max_order, where);
  spec.bleu.smoothing = parse_bleu_smoothing(get_or<std::string>(j, "smoothing", "exp", where));
  spec.bleu.floor_value = get_or<double>(j, "floor", spec.bleu.floor_value, where);
  if (j.contains("effective_order")) spec.bleu.effective_order = get_or<bool>(j, "effective_order", true, where);
  spec.bleu.validate();
  if (j.contains("normalizer")) spec.normalizer = parse_normalizer(j.at("normalizer"), cfg, where + ".normalizer");
  if (j.contains("token_unit")) spec.unit = parse_token_unit(get_or<std::string>(j, "token_unit", "word", where));
  spec.pretokenized = get_or<bool>(j, "pretokenized", spec.pretokenized, where);
  return spec;
}

PruneSchedule parse_schedule(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw ValidationError(where + ": expected a non-empty list of [fraction, references]");
  PruneSchedule s;
  for (const auto& r : j) {
    if (!r.is_array() || r.size() != 2 || !r[0].is_number() || !r[1].is_number_integer() || r[1].get<long long>() < 0)
      throw ValidationError(where + ": each round is [keep_fraction, references]");
    s.rounds.push_back({r[0].get<double>(), r[1].get<std::size_t>()});
  }
  s.validate();
  return s;
}

MethodConfig parse_method(const json& j, const RunConfig& cfg, std::size_t idx) {
  const std::string where = "methods[" + std::to_string(idx) + "]";
  if (!j.is_object()) throw ValidationError(where + ": expected an object");
  MethodConfig m;
  m.type = parse_decode_method(get_or<std::string>(j, "type", "", where));
  m.name = get_or<std::string>(j, "name", std::string(to_string(m.type)), where);
  if (m.name.empty() || m.name.find_first_of("\t\n") != std::string::npos)
    throw ValidationError(where + ": invalid method name");
  switch (m.type) {
    case DecodeMethod::map:
      check_keys(j, where, {"name", "type", "length_normalize"});
      m.length_normalize = get_or<bool>(j, "length_normalize", false, where);
      break;
    case DecodeMethod::beam:
      check_keys(j, where, {"name", "type", "width", "hypotheses"});
      m.beam_width = get_count(j, "width", 1, where);
      if (m.beam_width == 0) throw ValidationError(where + ".width: must be >= 1");
      m.beam_hypotheses = get_or<std::string>(j, "hypotheses", "", where);
      if (m.beam_hypotheses.empty()) throw ValidationError(where + ": beam needs a 'hypotheses' path");
      break;
    case DecodeMethod::mbr:
    case DecodeMethod::mbr_pruned:
      check_keys(j, where, {"name", "type", "n", "utility", "external_dir", "schedule"});
      m.n = get_count(j, "n", 0, where);
      m.utility = parse_utility(j.contains("utility") ? j.at("utility") : json(), cfg, where + ".utility");
      if (j.contains("external_dir")) m.external_dir = cfg.resolve(get_or<std::string>(j, "external_dir", "", where));
      if (m.utility.kind == UtilityKind::external_matrix && !m.external_dir)
        throw ValidationError(where + ": external_matrix utility needs 'external_dir'");
      if (m.utility.kind == UtilityKind::embedding_cosine_similarity && !cfg.embeddings)
        throw ValidationError(where + ": embedding utility needs a top-level 'embeddings' table");
      if (j.contains("schedule")) {
        if (m.type != DecodeMethod::mbr_pruned) throw ValidationError(where + ": 'schedule' only applies to mbr_pruned");
        m.schedule = parse_schedule(j.at("schedule"), where + ".schedule");
      }
      break;
    case DecodeMethod::weighted:
      check_keys(j, where,
                 {"name", "type", "alpha", "llm_key", "asr_key", "length_normalize_llm", "length_normalize_asr", "form"});
      m.weighted.alpha = get_or<double>(j, "alpha", m.weighted.alpha, where);
      m.weighted.llm_key = get_or<std::string>(j, "llm_key", m.weighted.llm_key, where);
      m.weighted.asr_key = get_or<std::string>(j, "asr_key", m.weighted.asr_key, where);
      m.weighted.length_normalize_llm = get_or<bool>(j, "length_normalize_llm", false, where);
      m.weighted.length_normalize_asr = get_or<bool>(j, "length_normalize_asr", false, where);
      {
        const auto form = get_or<std::string>(j, "form", "convex", where);
        if (form == "convex")
          m.weighted.form = FusionForm::convex;
        else if (form == "sum")
          m.weighted.form = FusionForm::sum;
        else
          throw ValidationError(where + ".form: expected convex or sum, got '" + form + "'");
      }
      m.weighted.validate();
      break;
    case DecodeMethod::oracle:
      check_keys(j, where, {"name", "type"});
      break;
  }
  return m;
}

void require_exists(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw ValidationError(what + " does not exist: " + p.string());
}

}  // namespace

fs::path MethodConfig::beam_path(const fs::path& base) const {
  std::string p = beam_hypotheses;
  const std::string tag = "{width}";
  for (auto pos = p.find(tag); pos != std::string::npos; pos = p.find(tag))
    p.replace(pos, tag.size(), std::to_string(beam_width));
  fs::path out(p);
  return out.is_absolute() ? out : base / out;
}

fs::path RunConfig::resolve(const fs::path& p) const { return p.is_absolute() ? p : base_dir / p; }

fs::path RunConfig::decode_results_path() const {
  return decode_results ? *decode_results : output_dir / "decode.jsonl";
}

RunConfig RunConfig::from_json(const json& j, const fs::path& base_dir) {
  check_keys(j, "config",
             {"manifest", "hypotheses", "embeddings", "decode_results", "output_dir", "seed", "workers",
              "normalizer", "token_unit", "pretokenized", "methods", "noise", "simulate", "correlate", "bench"});
  RunConfig cfg;
  cfg.base_dir = base_dir;
  cfg.effective = j;
  const std::string w = "config";
  auto opt_path = [&](const char* key) -> std::optional<fs::path> {
    if (!j.contains(key)) return std::nullopt;
    const auto p = cfg.resolve(get_or<std::string>(j, key, "", w));
    return p;
  };
  cfg.manifest = opt_path("manifest");
  cfg.hypotheses = opt_path("hypotheses");
  cfg.embeddings = opt_path("embeddings");
  cfg.decode_results = opt_path("decode_results");
  cfg.output_dir = cfg.resolve(get_or<std::string>(j, "output_dir", "out", w));
  cfg.seed = get_or<std::uint64_t>(j, "seed", 0, w);
  cfg.workers = get_or<int>(j, "workers", 0, w);
  if (cfg.workers < 0) throw ValidationError("config.workers: must be >= 0");

  if (j.contains("normalizer")) cfg.normalizer = parse_normalizer(j.at("normalizer"), cfg, "config.normalizer");
  Normalizer{cfg.normalizer};  // rule files are checked here
  cfg.unit = parse_token_unit(get_or<std::string>(j, "token_unit", "word", w));
  cfg.pretokenized = get_or<bool>(j, "pretokenized", false, w);

  std::set<std::string> names;
  if (j.contains("methods")) {
    if (!j.at("methods").is_array()) throw ValidationError("config.methods: expected a list");
    std::size_t i = 0;
    for (const auto& m : j.at("methods")) {
      cfg.methods.push_back(parse_method(m, cfg, i++));
      if (!names.insert(cfg.methods.back().name).second)
        throw ValidationError("config.methods: duplicate method name '" + cfg.methods.back().name + "'");
    }
  }

  if (j.contains("noise")) {
    const auto& n = j.at("noise");
    check_keys(n, "config.noise", {"paths", "dir", "snr_db"});
    for (const auto& p : get_or<std::vector<std::string>>(n, "paths", {}, "config.noise"))
      cfg.noise.paths.push_back(cfg.resolve(p));
    if (n.contains("dir")) cfg.noise.dir = cfg.resolve(get_or<std::string>(n, "dir", "", "config.noise"));
    cfg.noise.snr_db = get_or<double>(n, "snr_db", 0.0, "config.noise");
    if (!std::isfinite(cfg.noise.snr_db)) throw ValidationError("config.noise.snr_db: must be finite");
  }
  cfg.noise.seed = cfg.seed;

  cfg.simulate.utility = parse_utility(json(), cfg, "config.simulate.utility");
  cfg.simulate.sampler.seed = cfg.seed;
  if (j.contains("simulate")) {
    const auto& s = j.at("simulate");
    const std::string sw = "config.simulate";
    check_keys(s, sw, {"model", "n_grid", "seeds", "sampler", "enumerate", "utility"});
    if (s.contains("model")) cfg.simulate.model = cfg.resolve(get_or<std::string>(s, "model", "", sw));
    if (s.contains("n_grid")) cfg.simulate.n_grid = get_or<std::vector<std::size_t>>(s, "n_grid", {}, sw);
    if (cfg.simulate.n_grid.empty() ||
        std::any_of(cfg.simulate.n_grid.begin(), cfg.simulate.n_grid.end(), [](std::size_t n) { return n == 0; }) ||
        !std::is_sorted(cfg.simulate.n_grid.begin(), cfg.simulate.n_grid.end()))
      throw ValidationError(sw + ".n_grid: expected an increasing list of positive sizes");
    cfg.simulate.seeds = get_count(s, "seeds", cfg.simulate.seeds, sw);
    if (cfg.simulate.seeds == 0) throw ValidationError(sw + ".seeds: must be >= 1");
    cfg.simulate.enumerate = get_or<bool>(s, "enumerate", false, sw);
    if (s.contains("sampler")) {
      const auto& sm = s.at("sampler");
      check_keys(sm, sw + ".sampler", {"method", "temperature", "epsilon"});
      auto& sc = cfg.simulate.sampler;
      sc.method = parse_sampling_method(get_or<std::string>(sm, "method", "ancestral", sw));
      sc.temperature = get_or<double>(sm, "temperature", 1.0, sw);
      sc.epsilon = get_or<double>(sm, "epsilon", sc.method == SamplingMethod::epsilon ? 0.01 : 0.0, sw);
    }
    if (s.contains("utility")) cfg.simulate.utility = parse_utility(s.at("utility"), cfg, sw + ".utility");
  }
  cfg.simulate.sampler.num_samples = static_cast<int>(cfg.simulate.n_grid.back());
  cfg.simulate.sampler.validate();

  cfg.correlate.utility = parse_utility(json(), cfg, "config.correlate.utility");
  if (j.contains("correlate")) {
    const auto& c = j.at("correlate");
    check_keys(c, "config.correlate", {"n", "utility"});
    cfg.correlate.n = get_count(c, "n", 0, "config.correlate");
    if (c.contains("utility")) cfg.correlate.utility = parse_utility(c.at("utility"), cfg, "config.correlate.utility");
  }
  if (j.contains("bench")) {
    const auto& b = j.at("bench");
    check_keys(b, "config.bench", {"repetitions"});
    cfg.bench_repetitions = get_count(b, "repetitions", 3, "config.bench");
    if (cfg.bench_repetitions == 0) throw ValidationError("config.bench.repetitions: must be >= 1");
  }

  // Every referenced input must exist before any work starts.
  if (cfg.manifest) require_exists(*cfg.manifest, "manifest");
  if (cfg.hypotheses) require_exists(*cfg.hypotheses, "hypothesis file");
  if (cfg.embeddings) require_exists(*cfg.embeddings, "embedding table");
  if (cfg.normalizer.rules_path) require_exists(*cfg.normalizer.rules_path, "rule file");
  for (const auto& m : cfg.methods) {
    if (m.type == DecodeMethod::beam) require_exists(m.beam_path(cfg.base_dir), "beam file for " + m.name);
    if (m.external_dir) require_exists(*m.external_dir, "external utility directory for " + m.name);
  }
  for (const auto& p : cfg.noise.paths) require_exists(p, "noise file");
  if (cfg.noise.dir) require_exists(*cfg.noise.dir, "noise directory");
  if (cfg.simulate.model) require_exists(*cfg.simulate.model, "simulation model");
  return cfg;
}

RunConfig RunConfig::load(const fs::path& path) { return load_config(path, {}); }

std::string RunConfig::digest() const {
  json j = effective;
  j.erase("workers");
  j.erase("output_dir");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(j.dump())));
  return buf;
}

void apply_overrides(json& config, const Overrides& o) {
  if (!config.is_object()) throw ValidationError("config: expected a JSON object");
  auto for_methods = [&](auto&& fn) {
    if (!config.contains("methods")) return;
    for (auto& m : config["methods"]) {
      if (m.is_object() && m.contains("type") && m["type"].is_string()) fn(m, m["type"].get<std::string>());
    }
  };
  if (!o.methods.empty()) {
    json kept = json::array();
    std::set<std::string> found;
    if (config.contains("methods")) {
      for (const auto& m : config["methods"]) {
        std::string name;
        if (m.is_object() && m.contains("name") && m["name"].is_string())
          name = m["name"].get<std::string>();
        else if (m.is_object() && m.contains("type") && m["type"].is_string())
          name = m["type"].get<std::string>();
        if (std::find(o.methods.begin(), o.methods.end(), name) != o.methods.end()) {
          kept.push_back(m);
          found.insert(name);
        }
      }
    }
    for (const auto& name : o.methods)
      if (!found.count(name)) throw ValidationError("--method: no configured method named '" + name + "'");
    config["methods"] = kept;
  }
  if (o.n) {
    for_methods([&](json& m, const std::string& type) {
      if (type == "mbr" || type == "mbr_pruned") m["n"] = *o.n;
    });
    config["correlate"]["n"] = *o.n;
  }
  if (o.beam_width) {
    if (*o.beam_width == 0) throw ValidationError("--beam-width: must be >= 1");
    for_methods([&](json& m, const std::string& type) {
      if (type == "beam") m["width"] = *o.beam_width;
    });
  }
  if (o.alpha) {
    for_methods([&](json& m, const std::string& type) {
      if (type == "weighted") m["alpha"] = *o.alpha;
    });
  }
  if (o.epsilon) config["simulate"]["sampler"]["epsilon"] = *o.epsilon;
  if (o.temperature) config["simulate"]["sampler"]["temperature"] = *o.temperature;
  if (o.snr_db) config["noise"]["snr_db"] = *o.snr_db;
  if (o.seed) config["seed"] = *o.seed;
  if (o.out) config["output_dir"] = fs::absolute(*o.out).lexically_normal().string();
  if (o.workers) config["workers"] = *o.workers;
}

RunConfig load_config(const fs::path& path, const Overrides& overrides) {
  const std::string text = read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string(), 0, e.what());
  }
  apply_overrides(j, overrides);
  return RunConfig::from_json(j, fs::absolute(path).parent_path());
}

void set_workers(int workers) {
  if (workers > 0) omp_set_num_threads(workers);
}

}  // namespace mbrkit
