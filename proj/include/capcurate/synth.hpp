#pragma once

// Synthetic manifests for demos and end-to-end tests. Captions are random
// word sequences seeded with category keywords the mock classifier knows,
// with a controlled share of rule violations, non-English or off-topic
// markers, and near-duplicate captions.

#include <array>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "core.hpp"

namespace capcurate {

struct SynthConfig {
  std::size_t records = 1000;
  std::uint64_t seed = 0;
  std::array<double, 3> category_mix{0.5, 0.25, 0.25};  // speech, music, sfx
  double duplicate_rate = 0.05;
  double rule_violation_rate = 0.05;
  double non_english_rate = 0.02;
  double off_topic_rate = 0.02;
  double min_duration_s = 3.0;
  double max_duration_s = 30.0;
  double long_clip_rate = 0.1;  // clips drawn from (max_duration_s, long_duration_s]
  double long_duration_s = 75.0;
  std::size_t min_words = 220;
  std::size_t max_words = 700;
};

namespace synth_detail {

inline constexpr std::string_view kNeutral[] = {
    "clear", "bright", "warm", "soft", "steady", "gentle", "distant", "close", "layered", "subtle", "crisp", "smooth",
    "rough", "sharp", "muted", "faint", "strong", "brief", "long", "slow", "quick", "calm", "tense", "playful",
    "serious", "relaxed", "lively", "quiet", "full", "thin", "deep", "high", "low", "rising", "falling", "sudden",
    "gradual", "constant", "uneven", "balanced", "spacious", "intimate", "natural", "polished", "raw", "modern",
    "vintage", "urban", "rural", "morning", "evening", "night", "summer", "autumn", "winter", "spring", "room", "hall",
    "street", "park", "forest", "kitchen", "studio", "stage", "station", "market", "office", "garden", "harbor",
    "bridge", "tunnel", "field", "hill", "river", "lake", "coast", "city", "village", "clip", "recording", "moment",
    "texture", "tone", "timbre", "detail", "layer", "background", "foreground", "presence", "space", "echo",
    "resonance", "pattern", "phrase", "motif", "pulse", "beat", "accent", "pause", "silence", "transition", "contrast",
    "mood", "feeling", "scene", "setting", "atmosphere", "character", "quality", "level", "volume", "pitch", "color",
    "shape", "movement", "energy", "focus", "blend", "mix", "balance", "sense", "impression", "overall", "mostly",
    "slightly", "clearly", "briefly", "softly", "gently", "suddenly", "slowly", "quickly", "again", "later", "then",
    "while", "before", "after", "during", "across", "around", "behind", "beside", "above", "below", "within",
    "without", "along", "toward", "through", "the", "a", "an", "and", "with", "of", "in", "on", "at", "from", "by",
    "is", "are", "was", "has", "seems", "appears", "remains", "becomes", "stays", "keeps", "shows", "carries",
    "suggests", "creates", "adds", "brings", "holds", "fills", "frames", "lifts", "drops", "fades", "builds",
    "settles", "returns", "continues", "ends", "begins", "listener", "audience", "people", "someone", "group",
    "person", "crowd", "young", "older", "adult", "male", "female", "friendly", "formal", "casual", "curious",
    "excited", "happy", "sad", "nervous", "confident", "thoughtful", "simple", "complex", "rich", "sparse", "dense",
    "open", "closed", "wide", "narrow", "heavy", "light", "dark", "shiny", "dull", "fresh", "old", "new"};

inline constexpr std::string_view kSpeech[] = {"spoken", "speech", "speaker", "speaks", "voice", "narrator",
                                               "conversation", "dialogue", "lecture", "interview", "whispered"};
inline constexpr std::string_view kMusic[] = {"music", "guitar", "riff", "melody", "song", "piano", "drums",
                                              "chord", "tempo", "orchestra", "synth", "bassline", "violin"};
inline constexpr std::string_view kSfx[] = {"engine", "birdsong", "rain", "footsteps", "door", "dog", "siren",
                                            "ambient", "thunder", "explosion", "traffic", "applause"};

template <std::size_t N>
std::string_view pick(std::mt19937_64& rng, const std::string_view (&words)[N]) {
  return words[uniform_index(rng, N)];
}

inline std::string random_caption(std::mt19937_64& rng, Category cat, std::size_t words) {
  std::string out;
  std::string_view prev;
  for (std::size_t i = 0; i < words; ++i) {
    std::string_view w;
    do {
      if (unit_uniform(rng) < 0.08) {
        w = cat == Category::speech ? pick(rng, kSpeech) : cat == Category::music ? pick(rng, kMusic) : pick(rng, kSfx);
      } else {
        w = pick(rng, kNeutral);
      }
    } while (w == prev);
    if (!out.empty()) out.push_back(' ');
    out.append(w);
    prev = w;
  }
  return out;
}

inline double round2(double x) { return std::round(x * 100.0) / 100.0; }

}  // namespace synth_detail

inline std::vector<CurationRecord> synth_corpus(const SynthConfig& cfg) {
  using namespace synth_detail;
  std::vector<CurationRecord> out;
  out.reserve(cfg.records);
  const double mix_total = cfg.category_mix[0] + cfg.category_mix[1] + cfg.category_mix[2];
  for (std::size_t i = 0; i < cfg.records; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "syn-%06zu", i);
    CurationRecord r;
    r.record_id = id;
    r.audio_ref = "synthetic://" + r.record_id + ".wav";
    auto rng = SeedContext{cfg.seed, r.record_id}.engine("synth");

    double u = unit_uniform(rng) * mix_total;
    Category cat = Category::sfx;
    if (u < cfg.category_mix[0]) cat = Category::speech;
    else if (u < cfg.category_mix[0] + cfg.category_mix[1]) cat = Category::music;

    if (unit_uniform(rng) < cfg.long_clip_rate)
      r.duration_s = round2(cfg.max_duration_s + unit_uniform(rng) * (cfg.long_duration_s - cfg.max_duration_s));
    else
      r.duration_s = round2(cfg.min_duration_s + unit_uniform(rng) * (cfg.max_duration_s - cfg.min_duration_s));
    const std::size_t words = cfg.min_words + uniform_index(rng, cfg.max_words - cfg.min_words + 1);

    if (!out.empty() && unit_uniform(rng) < cfg.duplicate_rate) {
      // Near-duplicate of an earlier caption: one word swapped near the end.
      const auto& src = out[uniform_index(rng, out.size())];
      auto toks = split_whitespace(src.caption);
      std::string cap;
      const std::size_t swap_at = toks.size() - 1 - uniform_index(rng, std::min<std::size_t>(toks.size(), 10));
      for (std::size_t k = 0; k < toks.size(); ++k) {
        if (!cap.empty()) cap.push_back(' ');
        cap.append(k == swap_at ? std::string_view("variant") : toks[k]);
      }
      r.caption = std::move(cap);
    } else {
      r.caption = random_caption(rng, cat, words);
    }

    if (unit_uniform(rng) < cfg.rule_violation_rate) {
      switch (uniform_index(rng, 4)) {
        case 0: r.incomplete_flag = true; break;
        case 1: r.caption += " sooooooo loud"; break;
        case 2: r.caption += " again again again"; break;
        default: r.caption = first_words(r.caption, 60); break;
      }
    }
    if (unit_uniform(rng) < cfg.non_english_rate) r.caption += " [non-english]";
    if (unit_uniform(rng) < cfg.off_topic_rate) r.caption += " [off-topic]";

    QualityVector q;
    q.audio_only = round2(cat == Category::speech ? 1.0 + 4.0 * unit_uniform(rng) : 1.0 + 9.0 * unit_uniform(rng));
    q.alignment = round2(unit_uniform(rng));
    r.quality = q;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace capcurate
