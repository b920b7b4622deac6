#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mbrkit {

enum class NormalizerKind { none, basic, english_rules };
enum class TokenUnit { word, char_ };

std::string_view to_string(NormalizerKind k);
NormalizerKind parse_normalizer_kind(std::string_view s);
std::string_view to_string(TokenUnit u);
TokenUnit parse_token_unit(std::string_view s);

struct NormalizerSpec {
  NormalizerKind kind = NormalizerKind::basic;
  std::optional<std::filesystem::path> rules_path;  // required iff kind == english_rules
};

/// Whole-word substitution table. Patterns and replacements are stored
/// basic-normalized; patterns may span several words and the longest
/// pattern starting at a position wins.
class SubstitutionRules {
 public:
  static SubstitutionRules load(const std::filesystem::path& path);
  static SubstitutionRules parse(std::string_view text, const std::string& source = "<rules>");

  /// Applies the table to basic-normalized text.
  std::string apply(std::string_view normalized) const;

  std::size_t size() const { return rules_.size(); }

 private:
  struct Rule {
    std::vector<std::string> pattern;
    std::string replacement;
  };
  std::vector<Rule> rules_;          // sorted by pattern
  std::size_t longest_pattern_ = 0;  // in words

  const Rule* find(const std::vector<std::string>& words, std::size_t start, std::size_t len) const;
};

/// A configured normalizer. Construction loads and validates the rule file,
/// after which normalize() is a pure function safe for concurrent use.
class Normalizer {
 public:
  Normalizer() = default;
  explicit Normalizer(const NormalizerSpec& spec);

  std::string normalize(std::string_view text) const;
  NormalizerKind kind() const { return kind_; }

 private:
  NormalizerKind kind_ = NormalizerKind::basic;
  std::shared_ptr<const SubstitutionRules> rules_;
};

/// Unicode compatibility normalization, lowercasing, symbol stripping and
/// whitespace collapsing.
std::string basic_normalize(std::string_view text);

std::string normalize(std::string_view text, const NormalizerSpec& spec);

/// Word mode splits on whitespace; char mode yields one token per Unicode
/// scalar value, skipping whitespace.
std::vector<std::string> tokenize(std::string_view text, TokenUnit unit);

}  // namespace mbrkit
