// capcurate: command-line driver for the curation pipeline.
//
// Exit codes: 0 success, 2 usage or config error, 3 stage failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>

#include "CLI11.hpp"
#include "capcurate/capcurate.hpp"

namespace fs = std::filesystem;
using namespace capcurate;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

struct CommonOpts {
  std::string config;
  std::string input;
  std::string output_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> shards;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("-c,--config", o.config, "Pipeline config file");
  cmd->add_option("-i,--input", o.input, "Input manifest (overrides run.input)");
  cmd->add_option("-o,--output-dir", o.output_dir, "Output directory (overrides run.output_dir)");
  cmd->add_option("--seed", o.seed, "Global seed (overrides run.global_seed)");
  cmd->add_option("--shards", o.shards, "Worker fan-out (overrides run.shard_count)");
}

PipelineConfig load(const CommonOpts& o) {
  IniDocument doc;
  if (!o.config.empty()) doc = IniDocument::load(o.config);
  if (!o.input.empty()) doc.set("run", "input", o.input);
  if (!o.output_dir.empty()) doc.set("run", "output_dir", o.output_dir);
  if (o.seed) doc.set("run", "global_seed", std::to_string(*o.seed));
  if (o.shards) doc.set("run", "shard_count", std::to_string(*o.shards));
  return load_config(std::move(doc));
}

void print_funnel(const RunResult& r, std::ostream& os) {
  os << "stage       in       out      removed\n";
  for (const auto& s : r.reports) {
    char line[96];
    std::snprintf(line, sizeof line, "%-10s  %-7zu  %-7zu  %zu\n", std::string(to_string(s.stage)).c_str(), s.records_in,
                  s.records_out, s.removed);
    os << line;
  }
}

int run_pipeline(PipelineConfig cfg, std::optional<ResumePoint> resume) {
  Pipeline p(std::move(cfg));
  const RunResult r = p.run(resume);
  print_funnel(r, std::cout);
  if (!r.ok) {
    std::cerr << "error: stage failed: " << r.error << "\n"
              << "resume token written to " << (fs::path(p.config().output_dir) / "RESUME.json").string() << "\n";
    return kExitStage;
  }
  std::cout << "final manifest: " << r.last_manifest.string() << "\n";
  return 0;
}

void write_json_file(const std::string& path, const Json& j) {
  if (path.empty()) return;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("cannot write " + path);
}

std::vector<CurationRecord> read_all(const std::string& path, double max_error_rate) {
  if (path.empty()) throw ConfigError("an input manifest is required (--input or run.input)");
  auto r = read_manifest(fs::path(path), max_error_rate);
  for (const auto& e : r.errors) std::cerr << "warning: " << path << ":" << e.line << ": " << e.message << "\n";
  return std::move(r.records);
}

void print_grid(const CodecFrameGrid& g, std::ostream& os) {
  for (std::size_t t = 0; t < g.frames; ++t) {
    for (std::size_t s = 0; s < g.streams; ++s) os << (s ? " " : "") << g.at(t, s);
    os << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"capcurate: audio-caption corpus curation and training-data tooling"};
  app.require_subcommand(1);
  app.fallthrough(false);

  // Per-stage subcommands.
  std::vector<std::pair<CLI::App*, Stage>> stage_cmds;
  CommonOpts stage_opts;
  for (Stage st : kStageOrder) {
    auto* cmd = app.add_subcommand(std::string(to_string(st)), "Run only the " + std::string(to_string(st)) + " stage");
    add_common(cmd, stage_opts);
    stage_cmds.emplace_back(cmd, st);
  }

  CommonOpts run_opts;
  bool resume = false;
  auto* run = app.add_subcommand("run", "Run all enabled stages");
  add_common(run, run_opts);
  run->add_flag("--resume", resume, "Resume from the RESUME.json token in the output directory");

  std::string layout_mode, layout_in, layout_out;
  bool layout_text = false;
  auto* layout = app.add_subcommand("layout", "Convert codec token grids between frame and delay-interleaved layouts");
  layout->add_option("mode", layout_mode, "interleave | deinterleave")->required()->check(CLI::IsMember({"interleave", "deinterleave"}));
  layout->add_option("--in", layout_in, "Input grid file")->required();
  layout->add_option("--out", layout_out, "Output grid file");
  layout->add_flag("--text", layout_text, "Print the resulting grid as text");

  CommonOpts dec_opts;
  std::string dec_modality = "audio", dec_prompt = "a dog barks twice in a quiet street";
  std::size_t dec_vocab = 64, dec_frames = 16;
  auto* decode = app.add_subcommand("decode-demo", "Decode from a toy bigram logit table with CFG and top-k sampling");
  add_common(decode, dec_opts);
  decode->add_option("--modality", dec_modality, "audio | text")->check(CLI::IsMember({"audio", "text"}));
  decode->add_option("--prompt", dec_prompt, "Conditioning text");
  decode->add_option("--vocab", dec_vocab, "Vocabulary size of the toy table")->check(CLI::Range(2, 1 << 20));
  decode->add_option("--frames", dec_frames, "Audio frames to decode")->check(CLI::Range(1, 100000));

  CommonOpts sft_opts;
  std::string sft_kind = "both", sft_out, sft_report;
  auto* sft = app.add_subcommand("sft-sim", "Simulate SFT samples from captions and filter them with the judge");
  add_common(sft, sft_opts);
  sft->add_option("--kind", sft_kind, "understanding | generation | both")->check(CLI::IsMember({"understanding", "generation", "both"}));
  sft->add_option("--out", sft_out, "Output JSONL of retained samples")->required();
  sft->add_option("--report", sft_report, "Judge report JSON");

  CommonOpts cyc_opts;
  std::string cyc_report;
  std::optional<std::size_t> cyc_items;
  auto* cycle = app.add_subcommand("cycle-eval", "Audio->Caption->Audio and Caption->Audio->Caption consistency");
  add_common(cycle, cyc_opts);
  cycle->add_option("--items", cyc_items, "Number of manifest records to probe (overrides eval.items)");
  cycle->add_option("--report", cyc_report, "Per-item JSON report");

  std::string report_dir;
  auto* report = app.add_subcommand("report", "Summarize a finished or failed run");
  report->add_option("output_dir", report_dir, "Run output directory")->required();

  SynthConfig synth_cfg;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Write a synthetic manifest");
  synth->add_option("--records", synth_cfg.records, "Number of records");
  synth->add_option("--seed", synth_cfg.seed, "Seed");
  synth->add_option("--out", synth_out, "Output manifest")->required();

  auto* mock = app.add_subcommand("mock-server", "Serve the deterministic mock endpoint over stdin/stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    for (auto [cmd, st] : stage_cmds) {
      if (!cmd->parsed()) continue;
      PipelineConfig cfg = load(stage_opts);
      cfg.stages = {st};
      return run_pipeline(std::move(cfg), std::nullopt);
    }

    if (run->parsed()) {
      PipelineConfig cfg = load(run_opts);
      std::optional<ResumePoint> rp;
      if (resume) rp = Pipeline::read_resume_token(cfg.output_dir);
      return run_pipeline(std::move(cfg), rp);
    }

    if (layout->parsed()) {
      std::ifstream in(layout_in, std::ios::binary);
      if (!in) throw ConfigError("cannot open " + layout_in);
      CodecFrameGrid frame;
      DelayedGrid delayed;
      const bool is_delayed = read_grid(in, frame, delayed);
      if ((layout_mode == "interleave") == is_delayed)
        throw ConfigError("input is a " + std::string(is_delayed ? "delayed" : "frame") + " grid; cannot " + layout_mode + " it");
      std::ofstream out;
      if (!layout_out.empty()) {
        out.open(layout_out, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot write " + layout_out);
      }
      if (layout_mode == "interleave") {
        const DelayedGrid d = interleave(frame);
        if (out.is_open()) write_delayed_grid(out, d);
        std::cout << "frames " << d.frames << ", streams " << d.streams << ", flat length " << d.flat.size() << "\n";
        if (layout_text)
          for (std::size_t row = 0; row < d.rows(); ++row) {
            for (std::size_t s = 0; s < d.streams; ++s) std::cout << (s ? " " : "") << d.at(row, s);
            std::cout << '\n';
          }
      } else {
        const CodecFrameGrid g = deinterleave(delayed);
        if (out.is_open()) write_frame_grid(out, g);
        std::cout << "frames " << g.frames << ", streams " << g.streams << "\n";
        if (layout_text) print_grid(g, std::cout);
      }
      return 0;
    }

    if (decode->parsed()) {
      PipelineConfig cfg = load(dec_opts);
      const BigramOracle oracle(dec_vocab, cfg.global_seed);
      DualPassSource src = oracle.source(dec_prompt);
      if (dec_modality == "text") {
        DecodeConfig dc = cfg.decode_text;
        dc.top_k = std::min(dc.top_k, dec_vocab);
        const auto r = decode_loop(src, dc, static_cast<TokenId>(dec_vocab - 1));
        for (std::size_t i = 0; i < r.tokens.size(); ++i) std::cout << (i ? " " : "") << r.tokens[i];
        std::cout << "\n" << r.tokens.size() << " tokens" << (r.hit_end ? " (end token)" : "") << "\n";
        if (!r.ok) throw std::runtime_error(r.error);
        return 0;
      }
      const std::size_t S = cfg.pack.streams;
      const auto pad = static_cast<TokenId>(dec_vocab - 1);
      DelayedLayoutSource layout_src(src, dec_frames, S, pad);
      DecodeConfig dc = cfg.decode_audio;
      dc.top_k = std::min(dc.top_k, dec_vocab);
      dc.max_steps = layout_src.total_steps();
      const auto r = decode_loop(layout_src, dc);
      if (!r.ok) throw std::runtime_error(r.error);
      const CodecFrameGrid g = deinterleave(tokens_to_delayed(r.tokens, dec_frames, S, pad));
      std::cout << "decoded " << r.tokens.size() << " flat tokens -> " << g.frames << " frames x " << g.streams << " streams\n";
      print_grid(g, std::cout);
      return 0;
    }

    if (sft->parsed()) {
      PipelineConfig cfg = load(sft_opts);
      const auto records = read_all(cfg.input, cfg.max_error_rate);
      JudgeClient client(make_transport(cfg.client.endpoint), cfg.client.options);
      std::vector<SftSample> all;
      Json drops = Json::array();
      for (SftKind k : {SftKind::understanding, SftKind::generation}) {
        if (sft_kind != "both" && sft_kind != to_string(k)) continue;
        auto sim = simulate_all(records, k, client, cfg.sft, cfg.shard_count);
        for (auto& s : sim.samples) all.push_back(std::move(s));
        for (const auto& [id, why] : sim.dropped) drops.push_back(Json::object({{"sample_id", id}, {"reason", why}}));
      }
      const std::size_t simulated = all.size();
      auto judged = filter_by_judge(std::move(all), client, cfg.shard_count);
      {
        std::ofstream out(sft_out, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot write " + sft_out);
        for (const auto& s : judged.retained) out << sample_to_json(s).dump() << '\n';
      }
      Json rep = judged.report.to_json();
      rep["simulated"] = simulated;
      rep["dropped_at_synthesis"] = drops;
      rep["config_snapshot"] = cfg.snapshot();
      write_json_file(sft_report, rep);
      std::cout << "simulated " << simulated << ", judged " << judged.report.judged << ", retained "
                << judged.report.retained << ", rejected " << judged.report.rejected << ", judge failures "
                << judged.report.failed << ", dropped at synthesis " << drops.size() << "\n";
      return 0;
    }

    if (cycle->parsed()) {
      PipelineConfig cfg = load(cyc_opts);
      const auto records = read_all(cfg.input, cfg.max_error_rate);
      const std::size_t n = std::min(records.size(), cyc_items.value_or(cfg.cycle.items));
      JudgeClient client(make_transport(cfg.client.endpoint), cfg.client.options);
      const CycleEndpoints ep{client, client, client};
      std::vector<CycleItem> audio_items, text_items;
      for (std::size_t i = 0; i < n; ++i) {
        audio_items.push_back({records[i].record_id, records[i].audio_ref});
        text_items.push_back({records[i].record_id, records[i].caption});
      }
      std::vector<CycleResult> results{run_cycle(audio_items, CycleDirection::a2t2a, ep, cfg.shard_count),
                                       run_cycle(text_items, CycleDirection::t2a2t, ep, cfg.shard_count)};
      std::cout << format_cycle_table(results);
      Json rep = Json::object();
      rep["results"] = Json::array({cycle_to_json(results[0]), cycle_to_json(results[1])});
      rep["config_snapshot"] = cfg.snapshot();
      write_json_file(cyc_report, rep);
      return 0;
    }

    if (report->parsed()) {
      std::ifstream in(fs::path(report_dir) / "run_report.json");
      if (!in) throw ConfigError("no run_report.json in " + report_dir);
      const Json j = Json::parse(in);
      std::cout << "status: " << j.at("status").get<std::string>() << "\n";
      if (j.contains("failed_stage"))
        std::cout << "failed stage: " << j["failed_stage"].get<std::string>() << " (" << j["error"].get<std::string>() << ")\n";
      std::cout << "stage       in       out      removed\n";
      for (const auto& s : j.at("stages")) {
        char line[96];
        std::snprintf(line, sizeof line, "%-10s  %-7zu  %-7zu  %zu\n", s["stage"].get<std::string>().c_str(),
                      s["records_in"].get<std::size_t>(), s["records_out"].get<std::size_t>(), s["removed"].get<std::size_t>());
        std::cout << line;
      }
      const fs::path plan = fs::path(report_dir) / stage_dir_name(Stage::plan) / "plan.txt";
      if (std::ifstream p(plan); p) std::cout << "\n" << p.rdbuf();
      return 0;
    }

    if (synth->parsed()) {
      write_manifest(fs::path(synth_out), synth_corpus(synth_cfg));
      std::cout << "wrote " << synth_cfg.records << " records to " << synth_out << "\n";
      return 0;
    }

    if (mock->parsed()) {
      MockTransport t;
      serve_lines(t, std::cin, std::cout);
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitStage;
  }
  return 0;
}
