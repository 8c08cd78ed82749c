#pragma once

// Pipeline configuration: an INI-style file of [section] headers and
// key = value lines, mapped onto the per-module configs.
//
//   [run]
//   global_seed = 42
//   stages = ingest, segment, classify, filter
//
// Section names may contain dots ("resample.speech"). '#' and ';' start a
// comment line. Unknown keys are errors so typos never go unnoticed.

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cfg_decoder.hpp"
#include "core.hpp"
#include "dedup.hpp"
#include "mixture.hpp"
#include "quality_fusion.hpp"
#include "resampler.hpp"
#include "segment.hpp"
#include "sft.hpp"
#include "text_rules.hpp"

namespace capcurate {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parsed key/value text with section and file-order preserved.
class IniDocument {
 public:
  using Section = std::vector<std::pair<std::string, std::string>>;

  static IniDocument parse(std::istream& in, const std::string& origin = "<config>") {
    IniDocument doc;
    std::string line, section;
    std::size_t no = 0;
    while (std::getline(in, line)) {
      ++no;
      const std::string t = trim(line);
      if (t.empty() || t[0] == '#' || t[0] == ';') continue;
      if (t.front() == '[') {
        if (t.back() != ']' || t.size() < 3) throw ConfigError(origin + ":" + std::to_string(no) + ": malformed section header");
        section = trim(t.substr(1, t.size() - 2));
        doc.touch(section);
        continue;
      }
      const auto eq = t.find('=');
      if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(no) + ": expected key = value");
      if (section.empty()) throw ConfigError(origin + ":" + std::to_string(no) + ": key outside any section");
      const std::string key = trim(t.substr(0, eq));
      if (key.empty()) throw ConfigError(origin + ":" + std::to_string(no) + ": empty key");
      if (doc.get(section, key)) throw ConfigError(origin + ":" + std::to_string(no) + ": duplicate key " + section + "." + key);
      doc.set(section, key, trim(t.substr(eq + 1)));
    }
    return doc;
  }

  static IniDocument load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    return parse(in, path);
  }

  std::optional<std::string> get(const std::string& section, const std::string& key) const {
    for (const auto& [name, kv] : sections_)
      if (name == section)
        for (const auto& [k, v] : kv)
          if (k == key) return v;
    return std::nullopt;
  }

  void set(const std::string& section, const std::string& key, std::string value) {
    auto& kv = touch(section);
    for (auto& [k, v] : kv)
      if (k == key) {
        v = std::move(value);
        return;
      }
    kv.emplace_back(key, std::move(value));
  }

  const std::vector<std::pair<std::string, Section>>& sections() const { return sections_; }

  std::string to_string() const {
    std::string out;
    for (const auto& [name, kv] : sections_) {
      if (!out.empty()) out += '\n';
      out += "[" + name + "]\n";
      for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
    }
    return out;
  }

  Json to_json() const {
    Json j = Json::object();
    for (const auto& [name, kv] : sections_) {
      Json s = Json::object();
      for (const auto& [k, v] : kv) s[k] = v;
      j[name] = std::move(s);
    }
    return j;
  }

  static std::string trim(std::string_view s) {
    std::size_t a = 0, b = s.size();
    while (a < b && is_ascii_space(s[a])) ++a;
    while (b > a && is_ascii_space(s[b - 1])) --b;
    return std::string(s.substr(a, b - a));
  }

 private:
  Section& touch(const std::string& section) {
    for (auto& [name, kv] : sections_)
      if (name == section) return kv;
    sections_.emplace_back(section, Section{});
    return sections_.back().second;
  }

  std::vector<std::pair<std::string, Section>> sections_;
};

// ---------------------------------------------------------------------------
// Stages

enum class Stage { ingest, segment, classify, filter, score, fuse, resample, dedup, plan, pack };

inline constexpr Stage kStageOrder[] = {Stage::ingest, Stage::segment, Stage::classify, Stage::filter, Stage::score,
                                        Stage::fuse,   Stage::resample, Stage::dedup,  Stage::plan,   Stage::pack};

inline std::string_view to_string(Stage s) {
  constexpr std::string_view names[] = {"ingest", "segment", "classify", "filter", "score",
                                        "fuse",   "resample", "dedup",  "plan",   "pack"};
  return names[static_cast<std::size_t>(s)];
}

inline std::optional<Stage> parse_stage(std::string_view s) {
  for (Stage st : kStageOrder)
    if (to_string(st) == s) return st;
  return std::nullopt;
}

/// Parses a comma-separated stage list. Stages must appear in pipeline order;
/// a violation is reported together with the dependency it breaks.
inline std::vector<Stage> parse_stage_list(std::string_view text) {
  std::vector<Stage> out;
  std::string item;
  std::stringstream ss{std::string(text)};
  while (std::getline(ss, item, ',')) {
    item = IniDocument::trim(item);
    if (item.empty()) continue;
    auto st = parse_stage(item);
    if (!st) throw ConfigError("unknown stage '" + item + "'");
    for (Stage prev : out) {
      if (prev == *st) throw ConfigError("stage '" + item + "' listed twice");
      if (prev > *st)
        throw ConfigError("stage order violation: '" + std::string(to_string(prev)) + "' depends on '" + item +
                          "', so '" + item + "' must run before it");
    }
    out.push_back(*st);
  }
  if (out.empty()) throw ConfigError("no stages enabled");
  return out;
}

// ---------------------------------------------------------------------------
// Typed configuration

struct PackConfig {
  std::size_t context_length = 8192;
  double frame_rate = 25.0;          // codec frames per second of audio
  std::size_t streams = kDefaultStreams;
  double text_tokens_per_word = 1.0;
  std::size_t max_samples = 5'000'000;  // guard against runaway upsampling
};

struct BudgetConfig {
  BudgetSpec spec;
  double scale = 1.0;  // multiplies spec.total_tokens (desk-scale runs)
  std::optional<std::uint64_t> text_only_available;  // unset: assume exactly the target
};

struct ClientConfig {
  std::string endpoint = "mock";
  ClientOptions options;
};

struct CycleConfig {
  std::size_t items = 100;
};

struct PipelineConfig {
  std::uint64_t global_seed = 0;
  std::size_t shard_count = 1;
  std::string input;
  std::string output_dir = "capcurate-out";
  std::string scores_sidecar;
  double max_error_rate = 0.01;
  std::vector<Stage> stages{std::begin(kStageOrder), std::end(kStageOrder)};

  ClientConfig client;
  double segment_max_len_s = 30.0;
  SegmentMode segment_mode = SegmentMode::sequential;
  RuleConfig rules;
  FusionWeights fusion;
  ResampleConfig resample;
  DedupConfig dedup;
  BudgetConfig budget;
  PackConfig pack;
  DecodeConfig decode_audio = DecodeConfig::audio();
  DecodeConfig decode_text = DecodeConfig::text();
  DiversityConfig sft;
  CycleConfig cycle;

  IniDocument source;  // effective key/values, embedded in every report
  std::vector<std::string> overrides;

  bool enabled(Stage s) const { return std::find(stages.begin(), stages.end(), s) != stages.end(); }

  Json snapshot() const {
    Json j = Json::object();
    j["config"] = source.to_json();
    j["overrides"] = overrides;
    return j;
  }
};

namespace detail {

class Reader {
 public:
  explicit Reader(const IniDocument& doc) : doc_(doc) {}

  std::optional<std::string> raw(const std::string& section, const std::string& key) {
    used_.insert(section + "\x1f" + key);
    return doc_.get(section, key);
  }

  template <class T>
  void num(const std::string& section, const std::string& key, T& out) {
    auto v = raw(section, key);
    if (!v) return;
    T parsed{};
    const char* b = v->data();
    const char* e = b + v->size();
    auto [p, ec] = std::from_chars(b, e, parsed);
    if (ec != std::errc() || p != e) throw ConfigError(section + "." + key + ": cannot parse '" + *v + "' as a number");
    out = parsed;
  }

  void boolean(const std::string& section, const std::string& key, bool& out) {
    auto v = raw(section, key);
    if (!v) return;
    if (*v == "true" || *v == "1" || *v == "yes") out = true;
    else if (*v == "false" || *v == "0" || *v == "no") out = false;
    else throw ConfigError(section + "." + key + ": expected true/false, got '" + *v + "'");
  }

  void str(const std::string& section, const std::string& key, std::string& out) {
    if (auto v = raw(section, key)) out = *v;
  }

  void ratio3(const std::string& section, const std::string& key, std::array<double, 3>& out) {
    auto v = raw(section, key);
    if (!v) return;
    std::array<double, 3> r{};
    std::stringstream ss(*v);
    std::string part;
    std::size_t i = 0;
    while (std::getline(ss, part, ':')) {
      if (i == 3) throw ConfigError(section + "." + key + ": expected three ':'-separated ratios");
      part = IniDocument::trim(part);
      auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), r[i]);
      if (ec != std::errc() || p != part.data() + part.size() || r[i] < 0)
        throw ConfigError(section + "." + key + ": bad ratio '" + part + "'");
      ++i;
    }
    if (i != 3) throw ConfigError(section + "." + key + ": expected three ':'-separated ratios");
    out = r;
  }

  void reject_unknown() const {
    for (const auto& [name, kv] : doc_.sections())
      for (const auto& [k, v] : kv)
        if (!used_.count(name + "\x1f" + k)) throw ConfigError("unknown config key " + name + "." + k);
  }

 private:
  const IniDocument& doc_;
  std::set<std::string> used_;
};

}  // namespace detail

/// Environment variables that override config keys.
inline constexpr std::pair<const char*, std::pair<const char*, const char*>> kEnvOverrides[] = {
    {"CAPCURATE_SEED", {"run", "global_seed"}},
    {"CAPCURATE_JUDGE_ENDPOINT", {"client", "endpoint"}},
};

inline PipelineConfig load_config(IniDocument doc, bool use_env = true) {
  PipelineConfig c;
  if (use_env) {
    for (const auto& [env, key] : kEnvOverrides) {
      if (const char* v = std::getenv(env); v && *v) {
        doc.set(key.first, key.second, v);
        c.overrides.push_back(std::string(key.first) + "." + key.second + " from " + env);
      }
    }
  }
  detail::Reader r(doc);

  r.num("run", "global_seed", c.global_seed);
  r.num("run", "shard_count", c.shard_count);
  if (c.shard_count == 0) throw ConfigError("run.shard_count must be >= 1");
  r.str("run", "input", c.input);
  r.str("run", "output_dir", c.output_dir);
  r.str("run", "scores_sidecar", c.scores_sidecar);
  r.num("run", "max_error_rate", c.max_error_rate);
  if (auto v = r.raw("run", "stages")) c.stages = parse_stage_list(*v);

  r.str("client", "endpoint", c.client.endpoint);
  r.num("client", "timeout_s", c.client.options.timeout_s);
  r.num("client", "max_retries", c.client.options.max_retries);
  r.num("client", "max_in_flight", c.client.options.max_in_flight);
  if (c.client.options.max_retries < 0) throw ConfigError("client.max_retries must be >= 0");
  if (c.client.options.max_in_flight < 1) throw ConfigError("client.max_in_flight must be >= 1");

  r.num("segment", "max_len_s", c.segment_max_len_s);
  if (!(c.segment_max_len_s > 0)) throw ConfigError("segment.max_len_s must be > 0");
  if (auto v = r.raw("segment", "mode")) {
    if (*v == "sequential") c.segment_mode = SegmentMode::sequential;
    else if (*v == "random") c.segment_mode = SegmentMode::random;
    else throw ConfigError("segment.mode must be sequential or random");
  }

  r.num("rules", "char_run_reject", c.rules.char_run_reject);
  r.num("rules", "word_repeat_reject", c.rules.word_repeat_reject);
  r.num("rules", "fivegram_dup_reject", c.rules.fivegram_dup_reject);
  r.num("rules", "unique_ratio_reject", c.rules.unique_ratio_reject);
  r.num("rules", "min_avg_word_len", c.rules.min_avg_word_len);
  r.num("rules", "max_avg_word_len", c.rules.max_avg_word_len);
  r.num("rules", "min_tokens", c.rules.min_tokens);
  r.num("rules", "max_tokens", c.rules.max_tokens);

  r.num("fuse", "audio_weight", c.fusion.audio_only);
  r.num("fuse", "text_weight", c.fusion.text_only);
  r.num("fuse", "alignment_weight", c.fusion.alignment);

  if (auto v = r.raw("resample", "preset")) {
    if (*v == "understanding") c.resample = ResampleConfig::understanding();
    else if (*v == "generation") c.resample = ResampleConfig::generation();
    else if (*v == "sft_generation") c.resample = ResampleConfig::sft_generation();
    else throw ConfigError("resample.preset must be understanding, generation or sft_generation");
  }
  for (Category cat : kAudioCategories) {
    const std::string sec = "resample." + std::string(to_string(cat));
    auto& pc = c.resample.per_category[cat];
    r.num(sec, "temperature", pc.temperature);
    r.num(sec, "discard_fraction", pc.discard_fraction);
    if (!(pc.temperature >= 0)) throw ConfigError(sec + ".temperature must be >= 0");
    if (!(pc.discard_fraction >= 0 && pc.discard_fraction < 1)) throw ConfigError(sec + ".discard_fraction must be in [0, 1)");
  }

  r.num("dedup", "num_perm", c.dedup.minhash.num_perm);
  r.num("dedup", "shingle_width", c.dedup.minhash.shingle_w);
  r.num("dedup", "bands", c.dedup.bands);
  r.num("dedup", "rows", c.dedup.rows);
  r.num("dedup", "threshold", c.dedup.threshold);
  r.boolean("dedup", "exact_verify", c.dedup.exact_verify);
  try {
    c.dedup.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }

  r.num("budget", "total_tokens", c.budget.spec.total_tokens);
  r.num("budget", "scale", c.budget.scale);
  r.ratio3("budget", "direction_ratio", c.budget.spec.direction_ratio);
  r.ratio3("budget", "category_ratio", c.budget.spec.category_ratio);
  if (auto v = r.raw("budget", "text_only_available"); v && *v != "auto") {
    std::uint64_t n = 0;
    auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), n);
    if (ec != std::errc() || p != v->data() + v->size()) throw ConfigError("budget.text_only_available must be an integer or auto");
    c.budget.text_only_available = n;
  }
  if (!(c.budget.scale > 0)) throw ConfigError("budget.scale must be > 0");

  r.num("pack", "context_length", c.pack.context_length);
  r.num("pack", "frame_rate", c.pack.frame_rate);
  r.num("pack", "streams", c.pack.streams);
  r.num("pack", "text_tokens_per_word", c.pack.text_tokens_per_word);
  r.num("pack", "max_samples", c.pack.max_samples);
  if (c.pack.context_length == 0 || !(c.pack.frame_rate > 0) || c.pack.streams == 0 || !(c.pack.text_tokens_per_word > 0))
    throw ConfigError("pack: context_length, frame_rate, streams and text_tokens_per_word must be positive");

  for (auto [sec, dc] : {std::pair{"decode.audio", &c.decode_audio}, std::pair{"decode.text", &c.decode_text}}) {
    r.num(sec, "cfg", dc->guidance);
    r.num(sec, "temperature", dc->temperature);
    r.num(sec, "top_k", dc->top_k);
    r.num(sec, "max_steps", dc->max_steps);
    try {
      dc->validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string(sec) + ": " + e.what());
    }
  }

  r.num("sft", "requests_per_pair", c.sft.requests_per_pair);
  r.num("sft", "compositional_prob", c.sft.compositional_prob);
  r.num("sft", "imaginary_prob", c.sft.imaginary_prob);
  if (auto v = r.raw("sft", "attributes_file")) c.sft.attributes = load_list(*v);
  if (auto v = r.raw("sft", "personas_file")) c.sft.personas = load_list(*v);
  try {
    c.sft.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("sft: ") + e.what());
  }

  r.num("eval", "items", c.cycle.items);

  r.reject_unknown();

  c.resample.seed = c.global_seed;
  c.dedup.minhash.seed = c.global_seed;
  c.decode_audio.seed = c.decode_text.seed = c.sft.seed = c.global_seed;
  c.source = std::move(doc);
  return c;
}

inline PipelineConfig load_config_file(const std::string& path, bool use_env = true) {
  return load_config(IniDocument::load(path), use_env);
}

}  // namespace capcurate
