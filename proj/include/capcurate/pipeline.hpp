#pragma once

// Stage orchestration: ingest -> segment -> classify -> filter -> score ->
// fuse -> resample -> dedup -> plan -> pack. Each enabled stage reads the
// previous stage's manifest and writes
//
//   <output_dir>/<NN>_<stage>/manifest.jsonl   surviving records
//   <output_dir>/<NN>_<stage>/rejected.jsonl   records removed by this stage
//   <output_dir>/<NN>_<stage>/report.json      summary + config snapshot
//
// plus plan.json/plan.txt (plan) and packs.jsonl (pack). A failed stage
// leaves earlier outputs in place and writes <output_dir>/RESUME.json.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "config.hpp"
#include "dedup.hpp"
#include "judge.hpp"
#include "manifest.hpp"
#include "mixture.hpp"
#include "packing.hpp"
#include "parallel.hpp"
#include "quality_fusion.hpp"
#include "resampler.hpp"
#include "segment.hpp"
#include "text_rules.hpp"

namespace capcurate {

class StageError : public std::runtime_error {
 public:
  StageError(Stage stage, const std::string& what) : std::runtime_error(std::string(to_string(stage)) + ": " + what), stage_(stage) {}
  Stage stage() const { return stage_; }

 private:
  Stage stage_;
};

struct StageReport {
  Stage stage = Stage::ingest;
  std::size_t records_in = 0;
  std::size_t records_out = 0;
  std::size_t removed = 0;
  Json details = Json::object();

  Json to_json() const {
    Json j = Json::object();
    j["stage"] = std::string(to_string(stage));
    j["records_in"] = records_in;
    j["records_out"] = records_out;
    j["removed"] = removed;
    j["details"] = details;
    return j;
  }
};

struct RunResult {
  bool ok = true;
  std::vector<StageReport> reports;
  std::optional<Stage> failed_stage;
  std::string error;
  std::filesystem::path last_manifest;
};

/// Where a resumed run starts.
struct ResumePoint {
  Stage stage = Stage::ingest;
  std::filesystem::path input;
};

inline std::string stage_dir_name(Stage s) {
  const auto idx = static_cast<int>(s) + 1;
  return (idx < 10 ? "0" : "") + std::to_string(idx) + "_" + std::string(to_string(s));
}

// ---------------------------------------------------------------------------
// Sample geometry shared by the plan and pack stages

inline std::size_t caption_tokens(std::string_view caption, double tokens_per_word) {
  const double n = std::ceil(static_cast<double>(split_whitespace(caption).size()) * tokens_per_word);
  return std::max<std::size_t>(1, static_cast<std::size_t>(n));
}

/// Sequence positions of a delay-interleaved clip: one position per row.
inline std::size_t audio_positions(double duration_s, const PackConfig& pc) {
  const auto frames = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(duration_s * pc.frame_rate - 1e-9)));
  return frames + pc.streams - 1;
}

inline PackSample make_sample(const CurationRecord& r, Direction d, const PackConfig& pc, std::string id) {
  const std::size_t text = caption_tokens(r.caption, pc.text_tokens_per_word);
  const std::size_t audio = audio_positions(r.duration_s, pc);
  PackSample s;
  s.record_id = std::move(id);
  if (d == Direction::t2a) {
    s.target = Modality::audio;
    s.segments = {{Role::prompt, Modality::text, text}, {Role::target, Modality::audio, audio}};
  } else {
    s.target = Modality::text;
    s.segments = {{Role::prompt, Modality::audio, audio}, {Role::target, Modality::text, text}};
  }
  return s;
}

inline Inventory build_inventory(const std::vector<CurationRecord>& records, const PackConfig& pc) {
  Inventory inv;
  for (const auto& r : records) {
    if (r.category == Category::unknown) continue;
    for (Direction d : {Direction::t2a, Direction::a2t}) inv.at(d, r.category) += make_sample(r, d, pc, {}).length();
  }
  return inv;
}

inline MixturePlan plan_for(const std::vector<CurationRecord>& records, const PipelineConfig& cfg) {
  BudgetSpec spec = cfg.budget.spec;
  spec.total_tokens = static_cast<std::uint64_t>(std::llround(static_cast<double>(spec.total_tokens) * cfg.budget.scale));
  Inventory inv = build_inventory(records, cfg.pack);
  if (cfg.budget.text_only_available) {
    inv.text_only = *cfg.budget.text_only_available;
  } else {
    // The text-only corpus lives outside the manifest; assume it covers its target exactly.
    const auto per_dir = largest_remainder(spec.total_tokens, spec.direction_ratio);
    inv.text_only = std::max<std::uint64_t>(1, per_dir[static_cast<std::size_t>(Direction::text_only)]);
  }
  return allocate(spec, inv);
}

// ---------------------------------------------------------------------------

class Pipeline {
 public:
  explicit Pipeline(PipelineConfig cfg, std::shared_ptr<Transport> transport = nullptr)
      : cfg_(std::move(cfg)),
        transport_(transport ? std::move(transport) : make_transport(cfg_.client.endpoint)),
        client_(std::make_unique<JudgeClient>(transport_, cfg_.client.options)) {}

  const PipelineConfig& config() const { return cfg_; }

  RunResult run(std::optional<ResumePoint> resume = std::nullopt) {
    namespace fs = std::filesystem;
    const fs::path out = cfg_.output_dir;
    fs::create_directories(out);
    const fs::path token = out / "RESUME.json";
    fs::remove(token);

    RunResult res;
    fs::path input = resume ? resume->input : fs::path(cfg_.input);
    std::vector<CurationRecord> records;
    bool loaded = false;

    for (Stage st : cfg_.stages) {
      if (resume && st < resume->stage) continue;
      const fs::path dir = out / stage_dir_name(st);
      try {
        if (!loaded && st != Stage::ingest) records = load_input(st, input);
        loaded = true;
        fs::create_directories(dir);
        StageReport rep = run_stage(st, records, input, dir);
        write_json(dir / "report.json", report_json(rep));
        res.reports.push_back(std::move(rep));
        input = dir / "manifest.jsonl";
        res.last_manifest = input;
      } catch (const std::exception& e) {
        res.ok = false;
        res.failed_stage = st;
        res.error = e.what();
        Json t = Json::object();
        t["failed_stage"] = std::string(to_string(st));
        t["input"] = input.string();
        t["error"] = res.error;
        Json rest = Json::array();
        bool from = false;
        for (Stage s : cfg_.stages) {
          from = from || s == st;
          if (from) rest.push_back(std::string(to_string(s)));
        }
        t["remaining_stages"] = std::move(rest);
        write_json(token, t);
        break;
      }
    }

    Json summary = Json::object();
    summary["status"] = res.ok ? "ok" : "failed";
    if (!res.ok) {
      summary["failed_stage"] = std::string(to_string(*res.failed_stage));
      summary["error"] = res.error;
    }
    Json funnel = Json::array();
    for (const auto& r : res.reports) funnel.push_back(r.to_json());
    summary["stages"] = std::move(funnel);
    summary["config_snapshot"] = cfg_.snapshot();
    write_json(out / "run_report.json", summary);
    return res;
  }

  static ResumePoint read_resume_token(const std::filesystem::path& output_dir) {
    std::ifstream in(output_dir / "RESUME.json");
    if (!in) throw std::runtime_error("no resume token in " + output_dir.string());
    Json t = Json::parse(in);
    auto st = parse_stage(t.at("failed_stage").get<std::string>());
    if (!st) throw std::runtime_error("resume token names an unknown stage");
    return {*st, t.at("input").get<std::string>()};
  }

  // Individual stages operate in place on `records` and return their report.
  StageReport run_stage(Stage st, std::vector<CurationRecord>& records, const std::filesystem::path& input,
                        const std::filesystem::path& dir) {
    StageReport rep;
    rep.stage = st;
    rep.records_in = records.size();
    std::vector<CurationRecord> rejected;
    switch (st) {
      case Stage::ingest: rep.details = do_ingest(records, input); rep.records_in = records.size(); break;
      case Stage::segment: rep.details = do_segment(records, rejected); break;
      case Stage::classify: rep.details = do_classify(records); break;
      case Stage::filter: rep.details = do_filter(records, rejected); break;
      case Stage::score: rep.details = do_score(records, rejected); break;
      case Stage::fuse: rep.details = do_fuse(records); break;
      case Stage::resample: rep.details = do_resample(records, rejected); break;
      case Stage::dedup: rep.details = do_dedup(records, rejected); break;
      case Stage::plan: rep.details = do_plan(records, dir); break;
      case Stage::pack: rep.details = do_pack(records, dir); break;
    }
    rep.records_out = records.size();
    rep.removed = rejected.size();
    write_manifest(dir / "manifest.jsonl", records);
    write_manifest(dir / "rejected.jsonl", rejected);
    return rep;
  }

 private:
  JudgeClient& client() { return *client_; }

  std::size_t workers() const { return cfg_.shard_count; }

  Json report_json(const StageReport& rep) const {
    Json j = rep.to_json();
    j["config_snapshot"] = cfg_.snapshot();
    return j;
  }

  static void write_json(const std::filesystem::path& path, const Json& j) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error("cannot write " + path.string());
  }

  std::vector<CurationRecord> load_input(Stage st, const std::filesystem::path& input) const {
    if (input.empty()) throw StageError(st, "no input manifest configured");
    try {
      auto r = read_manifest(input, cfg_.max_error_rate);
      if (!r.errors.empty())
        throw StageError(st, std::to_string(r.errors.size()) + " malformed line(s) in " + input.string() + ", first at line " +
                                 std::to_string(r.errors.front().line) + ": " + r.errors.front().message);
      return std::move(r.records);
    } catch (const ManifestError& e) {
      throw StageError(st, e.what());
    }
  }

  /// Splits records into survivors and rejects, keeping input order.
  static void partition(std::vector<CurationRecord>& records, std::vector<CurationRecord>& rejected) {
    std::vector<CurationRecord> keep;
    keep.reserve(records.size());
    for (auto& r : records) (r.rejected() ? rejected : keep).push_back(std::move(r));
    records = std::move(keep);
  }

  Json do_ingest(std::vector<CurationRecord>& records, const std::filesystem::path& input) {
    if (input.empty()) throw StageError(Stage::ingest, "run.input is not set");
    ManifestReadResult r;
    try {
      r = read_manifest(input, cfg_.max_error_rate);
    } catch (const ManifestError& e) {
      throw StageError(Stage::ingest, e.what());
    }
    records = std::move(r.records);
    Json d = Json::object();
    d["malformed_lines"] = r.errors.size();
    Json errs = Json::array();
    for (const auto& e : r.errors) errs.push_back(Json::object({{"line", e.line}, {"error", e.message}}));
    d["errors"] = std::move(errs);
    return d;
  }

  Json do_segment(std::vector<CurationRecord>& records, std::vector<CurationRecord>& rejected) {
    std::vector<std::vector<CurationRecord>> out(records.size());
    parallel_for(records.size(), workers(), [&](std::size_t i) {
      CurationRecord& rec = records[i];
      if (!(rec.duration_s > 0.0)) {
        rec.add_verdict("segment", false, "zero duration");
        out[i].push_back(std::move(rec));
        return;
      }
      const auto plan = segment_plan(rec.duration_s, cfg_.segment_max_len_s, cfg_.segment_mode, SeedContext{cfg_.global_seed, rec.record_id});
      if (plan.windows.size() == 1 && plan.windows[0] == Window{0.0, rec.duration_s}) {
        out[i].push_back(std::move(rec));
        return;
      }
      for (std::size_t k = 0; k < plan.windows.size(); ++k) {
        CurationRecord child = rec;
        const auto& w = plan.windows[k];
        if (plan.windows.size() > 1) child.record_id = rec.record_id + "#" + std::to_string(k);
        child.duration_s = w.length();
        Json seg = Json::object();
        seg["source_id"] = rec.record_id;
        seg["start_s"] = w.start_s;
        seg["end_s"] = w.end_s;
        child.raw["segment"] = std::move(seg);
        child.add_flag("caption-inherited");
        out[i].push_back(std::move(child));
      }
    });

    std::vector<CurationRecord> flat;
    std::size_t split = 0, windows = 0;
    for (auto& group : out) {
      if (group.size() > 1) {
        ++split;
        windows += group.size();
      }
      for (auto& r : group) flat.push_back(std::move(r));
    }
    std::set<std::string> ids;
    for (const auto& r : flat)
      if (!ids.insert(r.record_id).second) throw StageError(Stage::segment, "segment id collides with existing record_id '" + r.record_id + "'");
    records = std::move(flat);
    partition(records, rejected);

    Json d = Json::object();
    d["mode"] = cfg_.segment_mode == SegmentMode::sequential ? "sequential" : "random";
    d["max_len_s"] = cfg_.segment_max_len_s;
    d["clips_split"] = split;
    d["windows_from_split_clips"] = windows;
    return d;
  }

  Json do_classify(std::vector<CurationRecord>& records) {
    std::vector<ClassifyOutcome> res(records.size());
    parallel_for(records.size(), workers(), [&](std::size_t i) { res[i] = classify_taxonomy(records[i].caption, client(), records[i].record_id); });
    std::map<std::string, std::size_t> counts;
    std::size_t failed = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
      records[i].category = res[i].category;
      if (res[i].failed) {
        ++failed;
        records[i].add_flag("classify-failed");
      }
      ++counts[std::string(to_string(res[i].category))];
    }
    Json d = Json::object();
    d["categories"] = counts;
    d["failed"] = failed;
    return d;
  }

  Json do_filter(std::vector<CurationRecord>& records, std::vector<CurationRecord>& rejected) {
    std::vector<FilterVerdict> v(records.size());
    parallel_for(records.size(), workers(), [&](std::size_t i) {
      v[i] = apply_rules(records[i], compute_text_stats(records[i].caption), cfg_.rules);
    });
    std::map<std::string, std::size_t> per_rule;
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (v[i].pass) {
        records[i].add_verdict("filter", true);
      } else {
        records[i].add_verdict("filter", false, "rule " + std::to_string(*v[i].failed_rule) + ": " + v[i].detail);
        ++per_rule["rule_" + std::to_string(*v[i].failed_rule)];
      }
    }
    partition(records, rejected);
    Json d = Json::object();
    d["rejected_by_rule"] = per_rule;
    return d;
  }

  Json do_score(std::vector<CurationRecord>& records, std::vector<CurationRecord>& rejected) {
    Json d = Json::object();
    if (!cfg_.scores_sidecar.empty()) {
      try {
        d["sidecar_records_updated"] = ingest_scores(records, cfg_.scores_sidecar);
      } catch (const ManifestError& e) {
        throw StageError(Stage::score, e.what());
      }
    }

    std::vector<CallResult<TextJudgeScores>> scores(records.size());
    std::vector<std::optional<SummaryOutcome>> summaries(records.size());
    parallel_for(records.size(), workers(), [&](std::size_t i) {
      scores[i] = score_text(records[i].caption, client(), records[i].record_id);
      if (scores[i].ok() && scores[i].value->is_english && scores[i].value->is_audio_centric)
        summaries[i] = summarize_for_alignment(records[i].caption, client(), records[i].record_id);
    });

    std::size_t failed = 0, non_english = 0, off_topic = 0, fallback = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
      auto& rec = records[i];
      if (!scores[i].ok()) {
        ++failed;
        rec.add_flag("text-judge-failed");
        rec.add_verdict("score", false, "text judge unavailable: " + scores[i].error);
        continue;
      }
      const auto& s = *scores[i].value;
      rec.text_judge = s;
      rec.quality_mut().text_only = s.composite();
      if (!s.is_english) {
        ++non_english;
        rec.add_verdict("score", false, "non-English");
      } else if (!s.is_audio_centric) {
        ++off_topic;
        rec.add_verdict("score", false, "not audio-centric");
      } else {
        rec.short_caption = summaries[i]->summary;
        for (const auto& f : summaries[i]->flags) {
          rec.add_flag(f);
          fallback += f == "truncated-fallback";
        }
        rec.add_verdict("score", true);
      }
    }
    partition(records, rejected);
    d["judge_failures"] = failed;
    d["non_english"] = non_english;
    d["not_audio_centric"] = off_topic;
    d["summary_fallbacks"] = fallback;
    return d;
  }

  Json do_fuse(std::vector<CurationRecord>& records) {
    const FuseReport r = fuse(records, cfg_.fusion);
    Json d = Json::object();
    d["per_category"] = r.per_category;
    d["missing_dimension"] = r.missing_dimension;
    d["unscored"] = r.unscored;
    d["non_finite"] = r.non_finite;
    d["warnings"] = r.warnings;
    return d;
  }

  Json do_resample(std::vector<CurationRecord>& records, std::vector<CurationRecord>& rejected) {
    Json per_cat = Json::object();
    std::size_t unrankable = 0;
    for (auto& r : records) {
      if (r.category == Category::unknown) {
        r.add_verdict("resample", false, "no category");
        ++unrankable;
      } else if (!r.quality || !r.quality->fused) {
        r.add_verdict("resample", false, "unscored");
        ++unrankable;
      }
    }
    for (Category cat : kAudioCategories) {
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < records.size(); ++i)
        if (records[i].category == cat && !records[i].rejected()) idx.push_back(i);
      std::vector<double> scores;
      std::vector<std::string> ids;
      for (auto i : idx) {
        scores.push_back(*records[i].quality->fused);
        ids.push_back(records[i].record_id);
      }
      const auto& rc = cfg_.resample.for_category(cat);
      const auto sel = gumbel_topk(scores, ids, rc, cfg_.resample.seed);
      std::vector<bool> chosen(idx.size(), false);
      for (auto s : sel.selected) chosen[s] = true;
      for (std::size_t k = 0; k < idx.size(); ++k) {
        if (chosen[k]) records[idx[k]].add_verdict("resample", true);
        else records[idx[k]].add_verdict("resample", false, "not selected by gumbel top-k");
      }
      Json c = Json::object();
      c["n"] = idx.size();
      c["k"] = sel.k;
      c["temperature"] = rc.temperature;
      c["discard_fraction"] = rc.discard_fraction;
      c["clamped"] = sel.clamped;
      per_cat[std::string(to_string(cat))] = std::move(c);
    }
    partition(records, rejected);
    Json d = Json::object();
    d["per_category"] = std::move(per_cat);
    d["unrankable"] = unrankable;
    return d;
  }

  Json do_dedup(std::vector<CurationRecord>& records, std::vector<CurationRecord>& rejected) {
    std::vector<DedupItem> items;
    items.reserve(records.size());
    for (const auto& r : records)
      items.push_back({r.record_id, r.caption, r.quality && r.quality->fused ? *r.quality->fused : 0.0});
    const DedupResult res = dedup(items, cfg_.dedup, workers());
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (res.keep[i]) records[i].add_verdict("dedup", true);
      else records[i].add_verdict("dedup", false, "duplicate-of:" + res.duplicate_of[i]);
    }
    partition(records, rejected);
    Json d = Json::object();
    d["candidate_pairs"] = res.candidate_pairs;
    d["verified_pairs"] = res.verified_pairs;
    d["short_texts"] = res.short_texts;
    d["clusters"] = res.clusters.size();
    Json cl = Json::array();
    for (const auto& c : res.clusters) cl.push_back(cluster_to_json(c));
    d["cluster_list"] = std::move(cl);
    return d;
  }

  Json do_plan(std::vector<CurationRecord>& records, const std::filesystem::path& dir) {
    MixturePlan plan;
    try {
      plan = plan_for(records, cfg_);
    } catch (const PlanError& e) {
      throw StageError(Stage::plan, e.what());
    }
    write_json(dir / "plan.json", plan_to_json(plan));
    std::ofstream(dir / "plan.txt", std::ios::binary | std::ios::trunc) << format_plan(plan);
    return plan_to_json(plan);
  }

  Json do_pack(std::vector<CurationRecord>& records, const std::filesystem::path& dir) {
    MixturePlan plan;
    try {
      plan = plan_for(records, cfg_);
    } catch (const PlanError& e) {
      throw StageError(Stage::pack, e.what());
    }
    // Upper bound on the upsampled sample count, checked before anything is built.
    double expected = 0.0;
    for (const auto& r : records)
      if (r.category != Category::unknown)
        for (Direction d : {Direction::t2a, Direction::a2t}) expected += std::ceil(plan.bucket(d, r.category).weight);
    if (expected > static_cast<double>(cfg_.pack.max_samples))
      throw StageError(Stage::pack, "upsampling would produce up to " + std::to_string(static_cast<std::uint64_t>(expected)) +
                                        " samples, above pack.max_samples (" + std::to_string(cfg_.pack.max_samples) +
                                        "); lower budget.scale or budget.total_tokens for this corpus");
    std::vector<PackSample> samples;
    for (const auto& r : records) {
      if (r.category == Category::unknown) continue;
      for (Direction d : {Direction::t2a, Direction::a2t}) {
        const std::string dname(to_string(d));
        const auto reps = repeat_count(plan.bucket(d, r.category).weight, SeedContext{cfg_.global_seed, r.record_id}, "repeat-" + dname);
        for (std::uint64_t k = 0; k < reps; ++k) {
          if (samples.size() >= cfg_.pack.max_samples)
            throw StageError(Stage::pack, "upsampling exceeds pack.max_samples (" + std::to_string(cfg_.pack.max_samples) + ")");
          samples.push_back(make_sample(r, d, cfg_.pack, r.record_id + "|" + dname + "|" + std::to_string(k)));
        }
      }
    }
    const PackResult res = pack(samples, cfg_.pack.context_length);
    {
      std::ofstream out(dir / "packs.jsonl", std::ios::binary | std::ios::trunc);
      for (const auto& p : res.packs) out << pack_to_json(p).dump() << '\n';
    }
    Json d = Json::object();
    d["samples"] = samples.size();
    d["packs"] = res.packs.size();
    d["total_tokens"] = res.total_tokens();
    d["utilization"] = res.utilization();
    d["single_modality_packs"] = res.single_modality_packs;
    d["unmixable_packs"] = res.unmixable_packs;
    d["oversize_rejected"] = res.rejected.size();
    d["text_only_bucket"] = "not packed: text-only corpus is external to the manifest";
    return d;
  }

  PipelineConfig cfg_;
  std::shared_ptr<Transport> transport_;
  std::unique_ptr<JudgeClient> client_;
};

}  // namespace capcurate
