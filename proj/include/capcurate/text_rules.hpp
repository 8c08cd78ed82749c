#pragma once

// The eight heuristic caption filters. Rules are checked in order 1..8 and
// the first violation is reported.

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "core.hpp"

namespace capcurate {

// ---------------------------------------------------------------------------
// UTF-8

/// Decodes UTF-8 into code points. Malformed sequences decode to U+FFFD.
inline std::vector<char32_t> decode_utf8(std::string_view s) {
  std::vector<char32_t> out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    std::size_t len = 0;
    char32_t cp = 0;
    if (b0 < 0x80) {
      len = 1;
      cp = b0;
    } else if ((b0 & 0xE0) == 0xC0) {
      len = 2;
      cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
      len = 3;
      cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
      len = 4;
      cp = b0 & 0x07;
    } else {
      out.push_back(0xFFFD);
      ++i;
      continue;
    }
    bool ok = i + len <= s.size();
    for (std::size_t k = 1; ok && k < len; ++k) {
      const auto b = static_cast<unsigned char>(s[i + k]);
      if ((b & 0xC0) != 0x80) {
        ok = false;
      } else {
        cp = (cp << 6) | (b & 0x3F);
      }
    }
    static constexpr char32_t kMin[] = {0, 0, 0x80, 0x800, 0x10000};
    if (!ok || cp < kMin[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
      out.push_back(0xFFFD);
      ++i;
      continue;
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

constexpr bool is_unicode_space(char32_t c) {
  return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == U'\f' || c == U'\v' || c == 0x85 ||
         c == 0xA0 || c == 0x1680 || (c >= 0x2000 && c <= 0x200A) || c == 0x2028 || c == 0x2029 || c == 0x202F ||
         c == 0x205F || c == 0x3000;
}

/// Code points accepted as "Latin text": everything below U+0370 (ASCII,
/// Latin-1, Latin Extended-A/B, IPA, modifiers, combining diacritics), the
/// other Latin extension blocks, and punctuation/symbol/emoji blocks that
/// contain no letters of another script.
inline bool is_latin_compatible(char32_t c) {
  struct Range {
    char32_t lo, hi;
  };
  static constexpr Range kAllowed[] = {
      {0x0000, 0x036F},   // ASCII .. combining diacritical marks
      {0x1AB0, 0x1AFF},   // combining diacritical marks extended
      {0x1DC0, 0x1DFF},   // combining diacritical marks supplement
      {0x1E00, 0x1EFF},   // Latin extended additional
      {0x2000, 0x2BFF},   // punctuation, currency, letterlike, arrows, math, shapes, dingbats
      {0x2C60, 0x2C7F},   // Latin extended-C
      {0x2E00, 0x2E7F},   // supplemental punctuation
      {0xA720, 0xA7FF},   // Latin extended-D
      {0xAB30, 0xAB6F},   // Latin extended-E
      {0xFB00, 0xFB06},   // Latin ligatures
      {0xFE00, 0xFE0F},   // variation selectors
      {0xFE20, 0xFE2F},   // combining half marks
      {0x1F000, 0x1FAFF}, // emoji and pictographs
  };
  for (const auto& r : kAllowed)
    if (c >= r.lo && c <= r.hi) return true;
  return false;
}

inline bool has_non_latin(std::string_view text) {
  for (char32_t c : decode_utf8(text))
    if (!is_latin_compatible(c)) return true;
  return false;
}

// ---------------------------------------------------------------------------
// Stats

using Tokenizer = std::function<std::vector<std::string>(std::string_view)>;

inline std::vector<std::string> whitespace_tokenize(std::string_view text) {
  std::vector<std::string> out;
  for (auto w : split_whitespace(text)) out.emplace_back(w);
  return out;
}

struct TextStats {
  std::size_t max_char_run = 0;
  std::size_t max_consec_word_repeat = 0;
  double fivegram_dup_ratio = 0.0;
  double unique_word_ratio = 1.0;
  double avg_word_len = 0.0;
  std::size_t token_count = 0;
  bool has_non_latin = false;
};

inline TextStats compute_text_stats(std::string_view caption, const Tokenizer& tokenizer = whitespace_tokenize) {
  TextStats st;
  const auto cps = decode_utf8(caption);

  std::size_t run = 0;
  std::size_t non_space = 0;
  char32_t prev = 0;
  for (char32_t c : cps) {
    if (!is_latin_compatible(c)) st.has_non_latin = true;
    if (is_unicode_space(c)) {
      run = 0;
      continue;
    }
    ++non_space;
    run = (run > 0 && c == prev) ? run + 1 : 1;
    prev = c;
    st.max_char_run = std::max(st.max_char_run, run);
  }

  const auto tokens = tokenizer(caption);
  st.token_count = tokens.size();
  if (tokens.empty()) return st;

  std::size_t rep = 1;
  st.max_consec_word_repeat = 1;
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    rep = tokens[i] == tokens[i - 1] ? rep + 1 : 1;
    st.max_consec_word_repeat = std::max(st.max_consec_word_repeat, rep);
  }

  if (tokens.size() >= 5) {
    const std::size_t total = tokens.size() - 4;
    std::unordered_set<std::string> seen;
    seen.reserve(total);
    std::size_t dups = 0;
    for (std::size_t i = 0; i < total; ++i) {
      std::string gram = tokens[i];
      for (std::size_t k = 1; k < 5; ++k) {
        gram.push_back('\x1F');
        gram += tokens[i + k];
      }
      if (!seen.insert(std::move(gram)).second) ++dups;
    }
    st.fivegram_dup_ratio = static_cast<double>(dups) / static_cast<double>(total);
  }

  std::unordered_set<std::string_view> distinct(tokens.begin(), tokens.end());
  st.unique_word_ratio = static_cast<double>(distinct.size()) / static_cast<double>(tokens.size());
  st.avg_word_len = static_cast<double>(non_space) / static_cast<double>(tokens.size());
  return st;
}

// ---------------------------------------------------------------------------
// Rules

struct RuleConfig {
  std::size_t char_run_reject = 5;       // rule 3: run >= this rejects
  std::size_t word_repeat_reject = 3;    // rule 4: repeat >= this rejects
  double fivegram_dup_reject = 0.10;     // rule 5: ratio >= this rejects
  double unique_ratio_reject = 0.30;     // rule 6: ratio <= this rejects
  double min_avg_word_len = 2.0;         // rule 7: avg < this rejects
  double max_avg_word_len = 15.0;        // rule 7: avg > this rejects
  std::size_t min_tokens = 200;          // rule 8: count < this rejects
  std::size_t max_tokens = 800;          // rule 8: count > this rejects
};

struct FilterVerdict {
  bool pass = true;
  std::optional<int> failed_rule;
  std::string detail;
};

inline FilterVerdict apply_rules(const CurationRecord& record, const TextStats& st, const RuleConfig& cfg = {}) {
  auto reject = [](int rule, std::string detail) { return FilterVerdict{false, rule, std::move(detail)}; };
  std::ostringstream d;

  if (record.incomplete_flag) return reject(1, "caption labeled incomplete");
  if (st.has_non_latin) return reject(2, "contains non-Latin characters");
  if (st.max_char_run >= cfg.char_run_reject) {
    d << "character run of " << st.max_char_run;
    return reject(3, d.str());
  }
  if (st.max_consec_word_repeat >= cfg.word_repeat_reject) {
    d << "word repeated " << st.max_consec_word_repeat << " times consecutively";
    return reject(4, d.str());
  }
  if (st.fivegram_dup_ratio >= cfg.fivegram_dup_reject) {
    d << "5-gram repetition ratio " << st.fivegram_dup_ratio;
    return reject(5, d.str());
  }
  if (st.unique_word_ratio <= cfg.unique_ratio_reject) {
    d << "unique word ratio " << st.unique_word_ratio;
    return reject(6, d.str());
  }
  if (st.avg_word_len < cfg.min_avg_word_len || st.avg_word_len > cfg.max_avg_word_len) {
    d << "average word length " << st.avg_word_len;
    return reject(7, d.str());
  }
  if (st.token_count > cfg.max_tokens || st.token_count < cfg.min_tokens) {
    d << "token count " << st.token_count;
    return reject(8, d.str());
  }
  return {};
}

}  // namespace capcurate
