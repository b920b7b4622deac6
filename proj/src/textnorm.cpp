#include "mbrkit/textnorm.hpp"

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "mbrkit/core.hpp"
#include "mbrkit/error.hpp"

namespace mbrkit {

std::string_view to_string(NormalizerKind k) {
  switch (k) {
    case NormalizerKind::none: return "none";
    case NormalizerKind::basic: return "basic";
    case NormalizerKind::english_rules: return "english_rules";
  }
  return "?";
}

NormalizerKind parse_normalizer_kind(std::string_view s) {
  if (s == "none") return NormalizerKind::none;
  if (s == "basic") return NormalizerKind::basic;
  if (s == "english_rules") return NormalizerKind::english_rules;
  throw ValidationError("unknown normalizer kind '" + std::string(s) + "'");
}

std::string_view to_string(TokenUnit u) { return u == TokenUnit::word ? "word" : "char"; }

TokenUnit parse_token_unit(std::string_view s) {
  if (s == "word") return TokenUnit::word;
  if (s == "char") return TokenUnit::char_;
  throw ValidationError("unknown token unit '" + std::string(s) + "'");
}

namespace {

const icu::Normalizer2& nfkc() {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* n = icu::Normalizer2::getNFKCInstance(status);
  if (U_FAILURE(status) || n == nullptr) throw Error("ICU NFKC normalizer unavailable");
  return *n;
}

icu::UnicodeString nfkc_apply(const icu::UnicodeString& s) {
  UErrorCode status = U_ZERO_ERROR;
  icu::UnicodeString out = nfkc().normalize(s, status);
  if (U_FAILURE(status)) throw Error("ICU normalization failed");
  return out;
}

bool is_kept(UChar32 c) { return c == U'\'' || u_isalpha(c) || u_isdigit(c); }

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && text[i] == ' ') ++i;
    const std::size_t start = i;
    while (i < text.size() && text[i] != ' ') ++i;
    if (i > start) words.emplace_back(text.substr(start, i - start));
  }
  return words;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (w.empty()) continue;
    if (!out.empty()) out.push_back(' ');
    out += w;
  }
  return out;
}

}  // namespace

std::string basic_normalize(std::string_view text) {
  icu::UnicodeString s = icu::UnicodeString::fromUTF8(icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  s = nfkc_apply(s);
  s.toLower(icu::Locale::getRoot());
  s = nfkc_apply(s);

  icu::UnicodeString kept;
  bool pending_space = false;
  for (int32_t i = 0; i < s.length();) {
    UChar32 c = s.char32At(i);
    i += U16_LENGTH(c);
    if (c == 0x2019) c = U'\'';  // right single quotation mark used as apostrophe
    if (is_kept(c)) {
      if (pending_space && !kept.isEmpty()) kept.append(static_cast<UChar>(' '));
      pending_space = false;
      kept.append(c);
    } else {
      pending_space = true;
    }
  }
  std::string out;
  kept.toUTF8String(out);
  return out;
}

// --- SubstitutionRules ---------------------------------------------------------

SubstitutionRules SubstitutionRules::load(const std::filesystem::path& path) {
  return parse(read_file(path), path.string());
}

SubstitutionRules SubstitutionRules::parse(std::string_view text, const std::string& source) {
  SubstitutionRules table;
  std::set<std::string> pattern_vocab;
  std::set<std::vector<std::string>> seen;
  bool has_deletion = false;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos)
      throw ParseError(source, line_no, "expected `pattern<TAB>replacement`");
    Rule rule;
    rule.pattern = split_words(basic_normalize(line.substr(0, tab)));
    rule.replacement = basic_normalize(line.substr(tab + 1));
    if (rule.pattern.empty()) throw ParseError(source, line_no, "pattern is empty after normalization");
    if (!seen.insert(rule.pattern).second)
      throw ParseError(source, line_no, "duplicate pattern '" + join_words(rule.pattern) + "'");
    has_deletion |= rule.replacement.empty();
    for (const auto& w : rule.pattern) pattern_vocab.insert(w);
    table.longest_pattern_ = std::max(table.longest_pattern_, rule.pattern.size());
    table.rules_.push_back(std::move(rule));
  }
  // A single pass must already be a fixed point, otherwise normalization
  // would not be idempotent.
  for (const auto& rule : table.rules_) {
    for (const auto& w : split_words(rule.replacement)) {
      if (pattern_vocab.count(w))
        throw ParseError(source, 0,
                         "replacement '" + rule.replacement + "' contains pattern word '" + w +
                             "'; rules must not feed each other");
    }
  }
  if (has_deletion && table.longest_pattern_ > 1)
    throw ParseError(source, 0, "empty replacements cannot be combined with multi-word patterns");
  std::sort(table.rules_.begin(), table.rules_.end(),
            [](const Rule& a, const Rule& b) { return a.pattern < b.pattern; });
  return table;
}

const SubstitutionRules::Rule* SubstitutionRules::find(const std::vector<std::string>& words,
                                                       std::size_t start, std::size_t len) const {
  const std::vector<std::string> key(words.begin() + static_cast<std::ptrdiff_t>(start),
                                     words.begin() + static_cast<std::ptrdiff_t>(start + len));
  auto it = std::lower_bound(rules_.begin(), rules_.end(), key,
                             [](const Rule& r, const std::vector<std::string>& k) { return r.pattern < k; });
  if (it != rules_.end() && it->pattern == key) return &*it;
  return nullptr;
}

std::string SubstitutionRules::apply(std::string_view normalized) const {
  const auto words = split_words(normalized);
  std::vector<std::string> out;
  out.reserve(words.size());
  std::size_t i = 0;
  while (i < words.size()) {
    const Rule* hit = nullptr;
    std::size_t hit_len = 0;
    for (std::size_t len = std::min(longest_pattern_, words.size() - i); len >= 1; --len) {
      if ((hit = find(words, i, len))) {
        hit_len = len;
        break;
      }
    }
    if (hit) {
      out.push_back(hit->replacement);
      i += hit_len;
    } else {
      out.push_back(words[i]);
      ++i;
    }
  }
  return join_words(out);
}

// --- Normalizer -------------------------------------------------------------------

Normalizer::Normalizer(const NormalizerSpec& spec) : kind_(spec.kind) {
  if (spec.kind == NormalizerKind::english_rules) {
    if (!spec.rules_path) throw ValidationError("english_rules normalizer requires a rules file");
    rules_ = std::make_shared<const SubstitutionRules>(SubstitutionRules::load(*spec.rules_path));
  } else if (spec.rules_path) {
    throw ValidationError("a rules file is only valid with the english_rules normalizer");
  }
}

std::string Normalizer::normalize(std::string_view text) const {
  switch (kind_) {
    case NormalizerKind::none: return std::string(text);
    case NormalizerKind::basic: return basic_normalize(text);
    case NormalizerKind::english_rules: return rules_->apply(basic_normalize(text));
  }
  return std::string(text);
}

std::string normalize(std::string_view text, const NormalizerSpec& spec) {
  return Normalizer(spec).normalize(text);
}

// --- tokenize -----------------------------------------------------------------------

std::vector<std::string> tokenize(std::string_view text, TokenUnit unit) {
  std::vector<std::string> tokens;
  const auto* bytes = reinterpret_cast<const uint8_t*>(text.data());
  const auto length = static_cast<int32_t>(text.size());
  if (unit == TokenUnit::word) {
    std::string current;
    for (int32_t i = 0; i < length;) {
      const int32_t start = i;
      UChar32 c;
      U8_NEXT(bytes, i, length, c);
      if (c >= 0 && u_isUWhiteSpace(c)) {
        if (!current.empty()) tokens.push_back(std::move(current));
        current.clear();
      } else {
        current.append(text.substr(static_cast<std::size_t>(start), static_cast<std::size_t>(i - start)));
      }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
  }
  for (int32_t i = 0; i < length;) {
    const int32_t start = i;
    UChar32 c;
    U8_NEXT(bytes, i, length, c);
    if (c >= 0 && u_isUWhiteSpace(c)) continue;
    tokens.emplace_back(text.substr(static_cast<std::size_t>(start), static_cast<std::size_t>(i - start)));
  }
  return tokens;
}

}  // namespace mbrkit
