#pragma once

#include <exception>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "mbrkit/harness.hpp"

namespace mbrkit::detail {

/// Fixed-format number for reports ("nan" for NaN).
std::string fmt(double v, int precision = 6);
/// Shortest round-trip representation.
std::string fmt_exact(double v);

void write_text(const std::filesystem::path& path, const std::string& text);

/// Runs f(i) for i in [0, n) on OpenMP threads. If any calls throw, the
/// exception from the lowest index is rethrown after the loop.
template <class F>
void parallel_for(std::size_t n, F&& f) {
  std::vector<std::exception_ptr> errors(n);
  const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic, 1)
  for (long long i = 0; i < count; ++i) {
    try {
      f(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Word or char tokens of a normalized text under the run settings.
std::vector<std::string> eval_tokens(const Normalizer& normalizer, TokenUnit unit, bool pretokenized,
                                     std::string_view raw);

/// Every method of a config bound to its resources.
class Decoder {
 public:
  Decoder(const RunConfig& cfg, const std::vector<Utterance>& manifest, const std::vector<HypothesisSet>& sets);

  std::size_t method_count() const { return methods_.size(); }
  const MethodConfig& method(std::size_t m) const { return *methods_[m].config; }

  /// False when some input the methods need is missing for this utterance.
  bool covers(const Utterance& u) const;
  DecodeResult run(std::size_t m, const Utterance& u) const;

 private:
  struct Bound {
    const MethodConfig* config = nullptr;
    std::shared_ptr<const Utility> utility;
    std::map<std::string, HypothesisSet> beam_sets;
  };
  const RunConfig& cfg_;
  std::map<std::string, const HypothesisSet*> sets_;
  Normalizer normalizer_;
  std::vector<Bound> methods_;
};

}  // namespace mbrkit::detail
