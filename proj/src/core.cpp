#include "mbrkit/core.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"
#include "mbrkit/error.hpp"

namespace mbrkit {

using ojson = nlohmann::ordered_json;

namespace {

std::vector<std::string> split_tabs(std::string_view line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      fields.emplace_back(line.substr(start));
      return fields;
    }
    fields.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

ojson sampler_to_json(const SamplerConfig& s) {
  ojson j;
  j["method"] = std::string(to_string(s.method));
  j["temperature"] = s.temperature;
  j["epsilon"] = s.epsilon;
  j["seed"] = s.seed;
  j["num_samples"] = s.num_samples;
  return j;
}

template <typename Json>
SamplerConfig sampler_from_json(const Json& j) {
  if (!j.is_object()) throw Error("`sampler` must be an object");
  SamplerConfig s;
  if (j.contains("method")) s.method = parse_sampling_method(j.at("method").template get<std::string>());
  if (j.contains("temperature")) s.temperature = j.at("temperature").template get<double>();
  if (j.contains("epsilon")) s.epsilon = j.at("epsilon").template get<double>();
  if (j.contains("seed")) s.seed = j.at("seed").template get<std::uint64_t>();
  if (j.contains("num_samples")) s.num_samples = j.at("num_samples").template get<int>();
  s.validate();
  return s;
}

}  // namespace

// --- enums ----------------------------------------------------------------

std::string_view to_string(SamplingMethod m) {
  switch (m) {
    case SamplingMethod::ancestral: return "ancestral";
    case SamplingMethod::temperature: return "temperature";
    case SamplingMethod::epsilon: return "epsilon";
  }
  return "?";
}

SamplingMethod parse_sampling_method(std::string_view s) {
  if (s == "ancestral") return SamplingMethod::ancestral;
  if (s == "temperature") return SamplingMethod::temperature;
  if (s == "epsilon") return SamplingMethod::epsilon;
  throw ValidationError("unknown sampling method '" + std::string(s) + "'");
}

std::string_view to_string(DecodeMethod m) {
  switch (m) {
    case DecodeMethod::map: return "map";
    case DecodeMethod::beam: return "beam";
    case DecodeMethod::mbr: return "mbr";
    case DecodeMethod::mbr_pruned: return "mbr_pruned";
    case DecodeMethod::weighted: return "weighted";
    case DecodeMethod::oracle: return "oracle";
  }
  return "?";
}

DecodeMethod parse_decode_method(std::string_view s) {
  if (s == "map") return DecodeMethod::map;
  if (s == "beam") return DecodeMethod::beam;
  if (s == "mbr") return DecodeMethod::mbr;
  if (s == "mbr_pruned") return DecodeMethod::mbr_pruned;
  if (s == "weighted") return DecodeMethod::weighted;
  if (s == "oracle") return DecodeMethod::oracle;
  throw ValidationError("unknown decode method '" + std::string(s) + "'");
}

// --- SamplerConfig ----------------------------------------------------------

double SamplerConfig::effective_temperature() const {
  return method == SamplingMethod::ancestral ? 1.0 : temperature;
}

double SamplerConfig::effective_epsilon() const {
  return method == SamplingMethod::epsilon ? epsilon : 0.0;
}

void SamplerConfig::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    throw ValidationError("sampler temperature must be a positive finite number");
  if (!(epsilon >= 0.0 && epsilon < 1.0))
    throw ValidationError("sampler epsilon must lie in [0, 1)");
  if (num_samples < 1) throw ValidationError("sampler num_samples must be positive");
}

// --- HypothesisSet ----------------------------------------------------------

HypothesisSet HypothesisSet::prefix(std::size_t n) const {
  if (n == 0 || n > hypotheses.size())
    throw ValidationError("utterance " + utterance_id + ": requested " + std::to_string(n) +
                          " hypotheses, " + std::to_string(hypotheses.size()) + " available");
  HypothesisSet out{utterance_id, {hypotheses.begin(), hypotheses.begin() + static_cast<std::ptrdiff_t>(n)},
                    sampler};
  return out;
}

void HypothesisSet::validate() const {
  if (hypotheses.empty()) throw ValidationError("hypothesis set '" + utterance_id + "' is empty");
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    const auto& h = hypotheses[i];
    if (h.log_prob && !std::isfinite(*h.log_prob))
      throw ValidationError("hypothesis " + std::to_string(i) + " of '" + utterance_id +
                            "' has a non-finite log_prob");
    if (h.token_count && *h.token_count < 0)
      throw ValidationError("hypothesis " + std::to_string(i) + " of '" + utterance_id +
                            "' has a negative token_count");
    for (const auto& [key, value] : h.external_scores) {
      if (key.empty())
        throw ValidationError("hypothesis " + std::to_string(i) + " of '" + utterance_id +
                              "' has an empty external score name");
      if (!std::isfinite(value))
        throw ValidationError("external score '" + key + "' of hypothesis " + std::to_string(i) +
                              " of '" + utterance_id + "' is not finite");
    }
  }
  if (sampler) sampler->validate();
}

// --- dedup ------------------------------------------------------------------

int WeightedHypothesisSet::total_weight() const {
  int total = 0;
  for (const auto& item : items) total += item.weight;
  return total;
}

std::vector<int> WeightedHypothesisSet::weights() const {
  std::vector<int> w;
  w.reserve(items.size());
  for (const auto& item : items) w.push_back(item.weight);
  return w;
}

WeightedHypothesisSet dedup_weight(const HypothesisSet& set) {
  if (set.hypotheses.empty())
    throw ValidationError("cannot deduplicate empty hypothesis set '" + set.utterance_id + "'");
  WeightedHypothesisSet out;
  out.utterance_id = set.utterance_id;
  std::unordered_map<std::string_view, std::size_t> slot;
  slot.reserve(set.hypotheses.size());
  for (std::size_t i = 0; i < set.hypotheses.size(); ++i) {
    const auto& h = set.hypotheses[i];
    auto [it, inserted] = slot.try_emplace(h.text, out.items.size());
    if (inserted) {
      out.items.push_back({h, 1, i});
    } else {
      ++out.items[it->second].weight;
    }
  }
  return out;
}

HypothesisSet expand(const WeightedHypothesisSet& set) {
  HypothesisSet out;
  out.utterance_id = set.utterance_id;
  for (const auto& item : set.items)
    for (int k = 0; k < item.weight; ++k) out.hypotheses.push_back(item.hypothesis);
  return out;
}

// --- manifest -----------------------------------------------------------------

std::vector<Utterance> parse_manifest(std::istream& in, const std::string& source) {
  std::vector<Utterance> out;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty() || line.front() == '#') continue;
    auto fields = split_tabs(line);
    if (fields.size() != 4)
      throw ParseError(source, line_no,
                       "expected 4 tab-separated fields, found " + std::to_string(fields.size()));
    Utterance u;
    u.id = std::move(fields[0]);
    if (u.id.empty()) throw ParseError(source, line_no, "empty utterance id");
    if (!fields[1].empty()) u.audio_path = std::move(fields[1]);
    if (!fields[2].empty()) u.reference = std::move(fields[2]);
    u.language = std::move(fields[3]);
    if (!seen.insert(u.id).second)
      throw ParseError(source, line_no, "duplicate utterance id '" + u.id + "'");
    out.push_back(std::move(u));
  }
  if (in.bad()) throw Error("read failure on " + source);
  return out;
}

std::vector<Utterance> load_manifest(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_manifest(in, path.string());
}

void write_manifest(std::ostream& out, const std::vector<Utterance>& utterances) {
  for (const auto& u : utterances) {
    out << u.id << '\t' << u.audio_path.value_or("") << '\t' << u.reference.value_or("") << '\t'
        << u.language << '\n';
  }
}

void save_manifest(const std::filesystem::path& path, const std::vector<Utterance>& utterances) {
  auto out = open_output(path);
  write_manifest(out, utterances);
}

// --- hypothesis sets ------------------------------------------------------------

std::string to_json_line(const HypothesisSet& set) {
  ojson j;
  j["utterance_id"] = set.utterance_id;
  ojson hyps = ojson::array();
  for (const auto& h : set.hypotheses) {
    ojson hj;
    hj["text"] = h.text;
    if (h.log_prob) hj["log_prob"] = *h.log_prob;
    if (h.token_count) hj["token_count"] = *h.token_count;
    if (!h.external_scores.empty()) {
      ojson scores = ojson::object();
      for (const auto& [k, v] : h.external_scores) scores[k] = v;
      hj["external_scores"] = std::move(scores);
    }
    hyps.push_back(std::move(hj));
  }
  j["hypotheses"] = std::move(hyps);
  if (set.sampler) j["sampler"] = sampler_to_json(*set.sampler);
  return j.dump();
}

HypothesisSet hypothesis_set_from_json(std::string_view line, const std::string& source,
                                       std::size_t line_no) {
  ojson j;
  try {
    j = ojson::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(source, line_no, std::string("malformed JSON: ") + e.what());
  }
  try {
    if (!j.is_object()) throw Error("record must be a JSON object");
    HypothesisSet set;
    set.utterance_id = j.at("utterance_id").get<std::string>();
    const auto& hyps = j.at("hypotheses");
    if (!hyps.is_array()) throw Error("`hypotheses` must be an array");
    for (const auto& hj : hyps) {
      Hypothesis h;
      h.text = hj.at("text").get<std::string>();
      if (hj.contains("log_prob")) {
        const auto& lp = hj.at("log_prob");
        if (!lp.is_number()) throw Error("`log_prob` must be a number");
        h.log_prob = lp.get<double>();
      }
      if (hj.contains("token_count")) {
        const auto& tc = hj.at("token_count");
        if (!tc.is_number_integer()) throw Error("`token_count` must be an integer");
        h.token_count = tc.get<std::int64_t>();
      }
      if (hj.contains("external_scores")) {
        const auto& sc = hj.at("external_scores");
        if (!sc.is_object()) throw Error("`external_scores` must be an object");
        for (const auto& [k, v] : sc.items()) {
          if (!v.is_number()) throw Error("external score '" + k + "' must be a number");
          h.external_scores[k] = v.get<double>();
        }
      }
      set.hypotheses.push_back(std::move(h));
    }
    if (j.contains("sampler")) set.sampler = sampler_from_json(j.at("sampler"));
    set.validate();
    return set;
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError(source, line_no, e.what());
  }
}

std::vector<HypothesisSet> parse_hypothesis_sets(std::istream& in, const std::string& source) {
  std::vector<HypothesisSet> out;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    auto set = hypothesis_set_from_json(line, source, line_no);
    if (!seen.insert(set.utterance_id).second)
      throw ParseError(source, line_no, "duplicate utterance id '" + set.utterance_id + "'");
    out.push_back(std::move(set));
  }
  if (in.bad()) throw Error("read failure on " + source);
  return out;
}

std::vector<HypothesisSet> load_hypothesis_sets(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_hypothesis_sets(in, path.string());
}

void write_hypothesis_sets(std::ostream& out, const std::vector<HypothesisSet>& sets) {
  for (const auto& s : sets) out << to_json_line(s) << '\n';
}

void save_hypothesis_sets(const std::filesystem::path& path, const std::vector<HypothesisSet>& sets) {
  auto out = open_output(path);
  write_hypothesis_sets(out, sets);
}

// --- decode results -------------------------------------------------------------

std::string to_json_line(const DecodeResult& r) {
  ojson j;
  j["utterance_id"] = r.utterance_id;
  j["method"] = std::string(to_string(r.method));
  j["label"] = r.label;
  j["chosen_index"] = r.chosen_index;
  j["chosen_text"] = r.chosen_text;
  j["objective"] = r.objective;
  if (r.per_candidate_objective) j["per_candidate_objective"] = *r.per_candidate_objective;
  if (r.utility_evaluations) j["utility_evaluations"] = *r.utility_evaluations;
  return j.dump();
}

DecodeResult decode_result_from_json(std::string_view line, const std::string& source,
                                     std::size_t line_no) {
  try {
    const auto j = ojson::parse(line);
    DecodeResult r;
    r.utterance_id = j.at("utterance_id").get<std::string>();
    r.method = parse_decode_method(j.at("method").get<std::string>());
    r.label = j.at("label").get<std::string>();
    r.chosen_index = j.at("chosen_index").get<std::size_t>();
    r.chosen_text = j.at("chosen_text").get<std::string>();
    r.objective = j.at("objective").get<double>();
    if (j.contains("per_candidate_objective"))
      r.per_candidate_objective = j.at("per_candidate_objective").get<std::vector<double>>();
    if (j.contains("utility_evaluations"))
      r.utility_evaluations = j.at("utility_evaluations").get<std::uint64_t>();
    return r;
  } catch (const std::exception& e) {
    throw ParseError(source, line_no, e.what());
  }
}

std::vector<DecodeResult> load_decode_results(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<DecodeResult> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    out.push_back(decode_result_from_json(line, path.string(), line_no));
  }
  return out;
}

void save_decode_results(const std::filesystem::path& path, const std::vector<DecodeResult>& results) {
  auto out = open_output(path);
  for (const auto& r : results) out << to_json_line(r) << '\n';
}

std::string read_file(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace mbrkit
