#pragma once

// Caption-then-process SFT simulation: requests and reasoning traces are
// synthesized from rich captions, diversified by attributes and personas,
// and filtered by a five-dimension judge.

#include <array>
#include <fstream>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "core.hpp"
#include "judge.hpp"
#include "parallel.hpp"
#include "sft_defaults.hpp"

namespace capcurate {

enum class SftKind { understanding, generation };

inline std::string_view to_string(SftKind k) { return k == SftKind::understanding ? "understanding" : "generation"; }

inline constexpr std::array<const char*, 5> kJudgeDimensions{
    "request_diversity", "request_response_alignment", "thinking_coherence", "caption_quality", "training_value"};

struct SftJudgeScores {
  std::array<int, 5> scores{};

  int sum() const { return std::accumulate(scores.begin(), scores.end(), 0); }
  double mean() const { return sum() / 5.0; }
  // mean > 3 exactly when the integer sum exceeds 15.
  bool retained() const { return sum() > 15; }
};

struct SftSample {
  SftKind kind = SftKind::understanding;
  std::string sample_id;
  std::string audio_ref;
  std::string user_request;
  std::string rich_caption;
  std::string cot;
  std::string answer;  // understanding only
  std::optional<SftJudgeScores> judge;

  std::string source_record_id;
  std::string strategy;  // "attribute" / "compositional" / "persona-explicit" / "persona-imaginary"
  std::vector<std::string> attributes;
  std::string persona;

  /// Template fields in training order.
  std::vector<std::pair<std::string, std::string>> sequence() const {
    if (kind == SftKind::understanding)
      return {{"audio", audio_ref}, {"user_request", user_request}, {"rich_caption", rich_caption}, {"cot", cot}, {"answer", answer}};
    return {{"user_request", user_request}, {"cot", cot}, {"rich_caption", rich_caption}, {"audio", audio_ref}};
  }

  bool complete() const {
    for (const auto& [name, text] : sequence())
      if (text.empty()) return false;
    return true;
  }
};

inline Json sample_to_json(const SftSample& s) {
  Json j = Json::object();
  j["sample_id"] = s.sample_id;
  j["kind"] = std::string(to_string(s.kind));
  j["source_record_id"] = s.source_record_id;
  j["strategy"] = s.strategy;
  if (s.kind == SftKind::understanding)
    j["attributes"] = s.attributes;
  else
    j["persona"] = s.persona;
  Json seq = Json::array();
  for (const auto& [name, text] : s.sequence()) seq.push_back(Json::array({name, text}));
  j["sequence"] = std::move(seq);
  if (s.judge) {
    Json jd = Json::object();
    for (std::size_t d = 0; d < kJudgeDimensions.size(); ++d) jd[kJudgeDimensions[d]] = s.judge->scores[d];
    jd["mean"] = s.judge->mean();
    j["judge"] = std::move(jd);
  }
  return j;
}

inline std::vector<std::string> load_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open list file " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && is_ascii_space(line.back())) line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    out.push_back(line);
  }
  return out;
}

struct DiversityConfig {
  std::vector<std::string> attributes{kDefaultAttributes.begin(), kDefaultAttributes.end()};
  std::vector<std::string> personas{kDefaultPersonas.begin(), kDefaultPersonas.end()};
  std::size_t requests_per_pair = 3;
  double compositional_prob = 0.3;
  double imaginary_prob = 0.3;
  std::uint64_t seed = 0;

  void validate() const {
    if (attributes.empty()) throw std::invalid_argument("attribute list is empty");
    if (personas.empty()) throw std::invalid_argument("persona list is empty");
    if (requests_per_pair == 0) throw std::invalid_argument("requests_per_pair must be >= 1");
    if (!(compositional_prob >= 0.0 && compositional_prob <= 1.0)) throw std::invalid_argument("compositional_prob must be in [0, 1]");
    if (!(imaginary_prob >= 0.0 && imaginary_prob <= 1.0)) throw std::invalid_argument("imaginary_prob must be in [0, 1]");
  }
};

// Instructions sent with each synthesis request. These are written for this
// tool; no published prompt text exists for the original simulation.
namespace prompts {
inline constexpr std::string_view kUnderstanding =
    "[tool-authored prompt] Given the rich caption of an audio clip and the listed attributes, write a complex but "
    "reasonable user request about the audio that asks about those attributes, its correct answer, and a reasoning "
    "trace that goes from the caption to the answer. Reply with JSON keys request, answer, cot.";
inline constexpr std::string_view kGeneration =
    "[tool-authored prompt] Acting as the given persona, write a creative request for generating the audio described "
    "by the rich caption. Style 'explicit' names the audio events; style 'imaginary' describes a feeling, an "
    "atmosphere or a scene instead. Add a reasoning trace that plans the audio content. Reply with JSON keys "
    "request, cot, style.";
inline constexpr std::string_view kJudge =
    "[tool-authored prompt] Rate the training sample from 1 to 5 on request_diversity, request_response_alignment, "
    "thinking_coherence, caption_quality and training_value. Reply with those five integer keys.";
}  // namespace prompts

struct SimulationOutcome {
  std::vector<SftSample> samples;
  std::vector<std::pair<std::string, std::string>> dropped;  // (sample_id, reason)
};

namespace detail {

/// k distinct indices from [0, n) by partial Fisher-Yates.
inline std::vector<std::size_t> draw_distinct(std::mt19937_64& rng, std::size_t n, std::size_t k) {
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  k = std::min(k, n);
  for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + uniform_index(rng, n - i)]);
  pool.resize(k);
  return pool;
}

inline void require_caption(const CurationRecord& record) {
  if (record.caption.empty()) throw std::invalid_argument("record " + record.record_id + " has no rich caption");
}

}  // namespace detail

inline SimulationOutcome simulate_understanding(const CurationRecord& record, JudgeClient& client, const DiversityConfig& cfg) {
  cfg.validate();
  detail::require_caption(record);
  SimulationOutcome out;
  const SeedContext seed{cfg.seed, record.record_id};
  for (std::size_t i = 0; i < cfg.requests_per_pair; ++i) {
    SftSample s;
    s.kind = SftKind::understanding;
    s.sample_id = record.record_id + "#u" + std::to_string(i);
    s.source_record_id = record.record_id;
    s.audio_ref = record.audio_ref;
    s.rich_caption = record.caption;

    auto rng = seed.engine("sft-understanding-" + std::to_string(i));
    const bool compositional = unit_uniform(rng) < cfg.compositional_prob && cfg.attributes.size() >= 2;
    const std::size_t count = compositional ? 2 + uniform_index(rng, 2) : 1;
    for (std::size_t a : detail::draw_distinct(rng, cfg.attributes.size(), count)) s.attributes.push_back(cfg.attributes[a]);
    s.strategy = compositional ? "compositional" : "attribute";

    Json payload = Json::object();
    payload["instructions"] = std::string(prompts::kUnderstanding);
    payload["caption"] = record.caption;
    payload["attributes"] = s.attributes;
    auto r = client.call(s.sample_id, "sft_understanding", std::move(payload), [](const Json& res) {
      return std::array<std::string, 3>{schema::nonempty_string(res, "request"), schema::nonempty_string(res, "answer"),
                                        schema::nonempty_string(res, "cot")};
    });
    if (!r.ok()) {
      out.dropped.emplace_back(s.sample_id, r.error);
      continue;
    }
    s.user_request = (*r.value)[0];
    s.answer = (*r.value)[1];
    s.cot = (*r.value)[2];
    out.samples.push_back(std::move(s));
  }
  return out;
}

inline SimulationOutcome simulate_generation(const CurationRecord& record, JudgeClient& client, const DiversityConfig& cfg) {
  cfg.validate();
  detail::require_caption(record);
  SimulationOutcome out;
  const SeedContext seed{cfg.seed, record.record_id};
  for (std::size_t i = 0; i < cfg.requests_per_pair; ++i) {
    SftSample s;
    s.kind = SftKind::generation;
    s.sample_id = record.record_id + "#g" + std::to_string(i);
    s.source_record_id = record.record_id;
    s.audio_ref = record.audio_ref;
    s.rich_caption = record.caption;

    auto rng = seed.engine("sft-generation-" + std::to_string(i));
    s.persona = cfg.personas[uniform_index(rng, cfg.personas.size())];
    const std::string style = unit_uniform(rng) < cfg.imaginary_prob ? "imaginary" : "explicit";

    Json payload = Json::object();
    payload["instructions"] = std::string(prompts::kGeneration);
    payload["caption"] = record.caption;
    payload["persona"] = s.persona;
    payload["style"] = style;
    auto r = client.call(s.sample_id, "sft_generation", std::move(payload), [](const Json& res) {
      auto st = schema::nonempty_string(res, "style");
      if (st != "imaginary" && st != "explicit") throw SchemaError("style must be imaginary or explicit");
      return std::array<std::string, 3>{schema::nonempty_string(res, "request"), schema::nonempty_string(res, "cot"), st};
    });
    if (!r.ok()) {
      out.dropped.emplace_back(s.sample_id, r.error);
      continue;
    }
    s.user_request = (*r.value)[0];
    s.cot = (*r.value)[1];
    s.strategy = "persona-" + (*r.value)[2];
    out.samples.push_back(std::move(s));
  }
  return out;
}

/// Runs one simulation kind over many records; output keeps record order.
inline SimulationOutcome simulate_all(const std::vector<CurationRecord>& records, SftKind kind, JudgeClient& client,
                                      const DiversityConfig& cfg, std::size_t workers = 1) {
  std::vector<SimulationOutcome> parts(records.size());
  parallel_for(records.size(), workers, [&](std::size_t i) {
    parts[i] = kind == SftKind::understanding ? simulate_understanding(records[i], client, cfg)
                                              : simulate_generation(records[i], client, cfg);
  });
  SimulationOutcome out;
  for (auto& p : parts) {
    for (auto& s : p.samples) out.samples.push_back(std::move(s));
    for (auto& d : p.dropped) out.dropped.push_back(std::move(d));
  }
  return out;
}

struct JudgeReport {
  std::size_t judged = 0;
  std::size_t retained = 0;
  std::size_t rejected = 0;  // quality rejections
  std::size_t failed = 0;    // judge unavailable or unusable after retries
  std::array<std::array<std::size_t, 5>, 5> histogram{};  // [dimension][score - 1]
  std::vector<std::pair<std::string, std::string>> failures;

  Json to_json() const {
    Json j = Json::object();
    j["judged"] = judged;
    j["retained"] = retained;
    j["rejected"] = rejected;
    j["failed"] = failed;
    Json h = Json::object();
    for (std::size_t d = 0; d < kJudgeDimensions.size(); ++d) h[kJudgeDimensions[d]] = histogram[d];
    j["histograms"] = std::move(h);
    Json f = Json::array();
    for (const auto& [id, err] : failures) f.push_back(Json::object({{"sample_id", id}, {"error", err}}));
    j["failures"] = std::move(f);
    return j;
  }
};

struct JudgeOutcome {
  std::vector<SftSample> retained;
  JudgeReport report;
};

inline SftJudgeScores parse_judge_scores(const Json& res) {
  SftJudgeScores s;
  for (std::size_t d = 0; d < kJudgeDimensions.size(); ++d) s.scores[d] = schema::score_1_to_5(res, kJudgeDimensions[d]);
  return s;
}

inline JudgeOutcome filter_by_judge(std::vector<SftSample> samples, JudgeClient& client, std::size_t workers = 1) {
  for (const auto& s : samples)
    if (!s.complete()) throw std::invalid_argument("sample " + s.sample_id + " has an empty template field");

  std::vector<CallResult<SftJudgeScores>> results(samples.size());
  parallel_for(samples.size(), workers, [&](std::size_t i) {
    Json payload = Json::object();
    payload["instructions"] = std::string(prompts::kJudge);
    payload["kind"] = std::string(to_string(samples[i].kind));
    Json seq = Json::array();
    for (const auto& [name, text] : samples[i].sequence()) seq.push_back(Json::array({name, text}));
    payload["sequence"] = std::move(seq);
    results[i] = client.call(samples[i].sample_id, "sft_judge", std::move(payload), parse_judge_scores);
  });

  JudgeOutcome out;
  auto& rep = out.report;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!results[i].ok()) {
      ++rep.failed;
      rep.failures.emplace_back(samples[i].sample_id, results[i].error);
      continue;
    }
    ++rep.judged;
    const auto& sc = *results[i].value;
    for (std::size_t d = 0; d < 5; ++d) ++rep.histogram[d][static_cast<std::size_t>(sc.scores[d] - 1)];
    samples[i].judge = sc;
    if (sc.retained()) {
      ++rep.retained;
      out.retained.push_back(std::move(samples[i]));
    } else {
      ++rep.rejected;
    }
  }
  return out;
}

}  // namespace capcurate
