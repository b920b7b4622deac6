// mbrkit: decoding, evaluation and analysis driver.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "mbrkit/error.hpp"
#include "mbrkit/harness.hpp"

namespace {

struct Common {
  std::string config;
  std::vector<std::string> methods;
  std::optional<std::size_t> n;
  std::optional<std::size_t> beam_width;
  std::optional<double> alpha;
  std::optional<double> epsilon;
  std::optional<double> temperature;
  std::optional<double> snr_db;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> workers;

  mbrkit::Overrides overrides() const {
    mbrkit::Overrides o;
    o.methods = methods;
    o.n = n;
    o.beam_width = beam_width;
    o.alpha = alpha;
    o.epsilon = epsilon;
    o.temperature = temperature;
    o.snr_db = snr_db;
    o.seed = seed;
    if (out) o.out = *out;
    o.workers = workers;
    return o;
  }
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON run configuration")->required();
  cmd->add_option("--method", c.methods, "keep only the named methods (repeatable)");
  cmd->add_option("--n", c.n, "samples used by MBR methods and correlate");
  cmd->add_option("--beam-width", c.beam_width, "beam width for beam methods");
  cmd->add_option("--alpha", c.alpha, "fusion weight for weighted methods");
  cmd->add_option("--epsilon", c.epsilon, "epsilon of the simulation sampler");
  cmd->add_option("--temperature", c.temperature, "temperature of the simulation sampler");
  cmd->add_option("--snr-db", c.snr_db, "target SNR for mix-noise");
  cmd->add_option("--seed", c.seed, "run seed");
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--workers", c.workers, "worker threads (0 = all cores)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MBR decoding and reranking toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(mbrkit::kToolkitVersion));

  Common common;
  std::string scores;
  auto* decode = app.add_subcommand("decode", "select a hypothesis per utterance with every configured method");
  auto* evaluate = app.add_subcommand("evaluate", "score decode results against references");
  auto* correlate = app.add_subcommand("correlate", "correlate MBR objectives with error rates");
  auto* simulate = app.add_subcommand("simulate", "regret of sample-based MBR on a synthetic model");
  auto* bench = app.add_subcommand("bench", "time every configured method");
  auto* mix = app.add_subcommand("mix-noise", "mix noise into the manifest audio at a target SNR");
  auto* merge = app.add_subcommand("merge-scores", "attach external score columns to hypothesis sets");
  for (auto* c : {decode, evaluate, correlate, simulate, bench, mix, merge}) add_common(c, common);
  merge->add_option("--scores", scores, "key<TAB>utterance<TAB>index<TAB>value rows")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const auto cfg = mbrkit::load_config(common.config, common.overrides());
    if (decode->parsed()) return mbrkit::cmd_decode(cfg);
    if (evaluate->parsed()) return mbrkit::cmd_evaluate(cfg);
    if (correlate->parsed()) return mbrkit::cmd_correlate(cfg);
    if (simulate->parsed()) return mbrkit::cmd_simulate(cfg);
    if (bench->parsed()) return mbrkit::cmd_bench(cfg);
    if (mix->parsed()) return mbrkit::cmd_mix_noise(cfg);
    if (merge->parsed()) return mbrkit::cmd_merge_scores(cfg, scores);
  } catch (const mbrkit::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return mbrkit::kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return mbrkit::kExitValidation;
  }
  return mbrkit::kExitValidation;
}
