#pragma once

// Domain types and deterministic seeding shared by every curation stage.

#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace capcurate {

using Json = nlohmann::ordered_json;

enum class Category { speech, music, sfx, unknown };

inline constexpr Category kAudioCategories[] = {Category::speech, Category::music, Category::sfx};

inline std::string_view to_string(Category c) {
  switch (c) {
    case Category::speech: return "speech";
    case Category::music: return "music";
    case Category::sfx: return "sfx";
    case Category::unknown: break;
  }
  return "unknown";
}

inline std::optional<Category> parse_category(std::string_view s) {
  if (s == "speech") return Category::speech;
  if (s == "music") return Category::music;
  if (s == "sfx") return Category::sfx;
  if (s == "unknown") return Category::unknown;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Hashing and seeding

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Stable 64-bit string hash (FNV-1a followed by a splitmix finalizer).
constexpr std::uint64_t hash64(std::string_view s, std::uint64_t salt = 0) {
  return splitmix64(fnv1a64(s) ^ splitmix64(salt));
}

/// Per-record seed source. The derived seed depends only on (global_seed,
/// record_id, stream) so shard layout and processing order never matter.
struct SeedContext {
  std::uint64_t global_seed = 0;
  std::string record_id;

  std::uint64_t derive(std::string_view stream = {}) const {
    std::uint64_t s = splitmix64(global_seed ^ hash64(record_id));
    if (!stream.empty()) s = splitmix64(s ^ hash64(stream, 0x5EED));
    return s;
  }

  std::mt19937_64 engine(std::string_view stream = {}) const { return std::mt19937_64(derive(stream)); }
};

/// Uniform double in [0, 1) with 53 random bits. Avoids the
/// implementation-defined std::uniform_real_distribution so results are
/// identical across standard libraries.
inline double unit_uniform(std::mt19937_64& g) { return static_cast<double>(g() >> 11) * 0x1.0p-53; }

/// Uniform integer in [0, n) by rejection (portable, unbiased).
inline std::uint64_t uniform_index(std::mt19937_64& g, std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index: empty range");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = g();
  } while (x >= limit);
  return x % n;
}

// ---------------------------------------------------------------------------
// Records

struct Verdict {
  std::string stage;
  bool pass = true;
  std::string reason;

  bool operator==(const Verdict&) const = default;
};

/// Raw scores on the three quality dimensions and their within-category
/// percentiles. Any field may be absent.
struct QualityVector {
  std::optional<double> audio_only;
  std::optional<double> text_only;
  std::optional<double> alignment;
  std::optional<double> pct_audio;
  std::optional<double> pct_text;
  std::optional<double> pct_align;
  std::optional<double> fused;

  bool operator==(const QualityVector&) const = default;
};

struct TextJudgeScores {
  Category audio_type = Category::unknown;
  bool is_english = false;
  bool is_audio_centric = false;
  int intelligibility = 1;
  int complexity = 1;
  int diversity = 1;

  double composite() const { return (intelligibility + complexity + diversity) / 3.0; }
  bool operator==(const TextJudgeScores&) const = default;
};

struct CurationRecord {
  std::string record_id;
  std::string audio_ref;
  double duration_s = 0.0;
  std::string caption;
  Category category = Category::unknown;
  bool incomplete_flag = false;
  std::optional<QualityVector> quality;
  std::optional<TextJudgeScores> text_judge;
  std::optional<std::string> short_caption;
  std::vector<std::string> flags;
  std::vector<Verdict> verdicts;

  // The parsed source object; keeps unknown keys and key order verbatim.
  Json raw = Json::object();

  void add_verdict(std::string stage, bool pass, std::string reason = {}) {
    verdicts.push_back({std::move(stage), pass, std::move(reason)});
  }
  void add_flag(std::string flag) {
    for (const auto& f : flags)
      if (f == flag) return;
    flags.push_back(std::move(flag));
  }
  bool has_flag(std::string_view flag) const {
    for (const auto& f : flags)
      if (f == flag) return true;
    return false;
  }
  bool rejected() const {
    for (const auto& v : verdicts)
      if (!v.pass) return true;
    return false;
  }
  QualityVector& quality_mut() {
    if (!quality) quality.emplace();
    return *quality;
  }
};

constexpr bool is_ascii_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

/// Whitespace-split words, the default notion of "token" for captions.
inline std::vector<std::string_view> split_whitespace(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_ascii_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_ascii_space(text[j])) ++j;
    if (j > i) out.push_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

/// The first n whitespace-separated words, joined by single spaces.
inline std::string first_words(std::string_view text, std::size_t n) {
  std::string out;
  std::size_t k = 0;
  for (auto w : split_whitespace(text)) {
    if (k++ == n) break;
    if (!out.empty()) out.push_back(' ');
    out.append(w);
  }
  return out;
}

}  // namespace capcurate
