#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "capcurate/capcurate.hpp"

using namespace capcurate;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("capcurate-pipeline-" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path synth_manifest(const fs::path& dir, std::size_t n, std::uint64_t seed) {
  SynthConfig sc;
  sc.records = n;
  sc.seed = seed;
  const fs::path p = dir / "input.jsonl";
  write_manifest(p, synth_corpus(sc));
  return p;
}

PipelineConfig base_config(const fs::path& input, const fs::path& out, std::size_t shards = 1,
                           const std::string& extra = "") {
  std::istringstream in("[run]\nglobal_seed = 11\ninput = " + input.string() + "\noutput_dir = " + out.string() +
                        "\nshard_count = " + std::to_string(shards) + "\n[budget]\ntotal_tokens = 60000\n" + extra);
  return load_config(IniDocument::parse(in), false);
}

// Every file produced by a run, keyed by path relative to the output directory.
std::map<std::string, std::string> outputs(const fs::path& out) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(out)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), out).string();
    if (rel.find("report.json") != std::string::npos) continue;  // embeds the output path and shard count
    files[rel] = slurp(e.path());
  }
  return files;
}

}  // namespace

TEST(Pipeline, FullRunSucceedsAndWritesEveryStage) {
  const auto dir = scratch("full");
  Pipeline p(base_config(synth_manifest(dir, 300, 1), dir / "out"));
  const auto r = p.run();
  ASSERT_TRUE(r.ok) << r.error;
  ASSERT_EQ(r.reports.size(), std::size(kStageOrder));
  for (Stage st : kStageOrder) {
    EXPECT_TRUE(fs::exists(dir / "out" / stage_dir_name(st) / "manifest.jsonl")) << to_string(st);
    EXPECT_TRUE(fs::exists(dir / "out" / stage_dir_name(st) / "report.json")) << to_string(st);
  }
  EXPECT_TRUE(fs::exists(dir / "out" / stage_dir_name(Stage::pack) / "packs.jsonl"));
  EXPECT_TRUE(fs::exists(dir / "out" / stage_dir_name(Stage::plan) / "plan.json"));
  EXPECT_FALSE(fs::exists(dir / "out" / "RESUME.json"));
  std::ifstream rep(dir / "out" / "run_report.json");
  const Json j = Json::parse(rep);
  EXPECT_EQ(j["status"], "ok");
  EXPECT_TRUE(j["config_snapshot"].contains("config"));
}

TEST(Pipeline, FunnelMonotoneAndEveryRemovalHasAVerdict) {
  const auto dir = scratch("funnel");
  Pipeline p(base_config(synth_manifest(dir, 400, 2), dir / "out"));
  const auto r = p.run();
  ASSERT_TRUE(r.ok) << r.error;
  std::size_t total_removed = 0;
  for (std::size_t i = 0; i < r.reports.size(); ++i) {
    const auto& rep = r.reports[i];
    if (i > 0) {
      EXPECT_EQ(rep.records_in, r.reports[i - 1].records_out) << to_string(rep.stage);
    }
    // Segmentation may split one clip into several windows; every other stage only removes.
    if (rep.stage != Stage::segment) {
      EXPECT_EQ(rep.records_in, rep.records_out + rep.removed) << to_string(rep.stage);
    }
    const auto rejected = read_manifest(dir / "out" / stage_dir_name(rep.stage) / "rejected.jsonl").records;
    ASSERT_EQ(rejected.size(), rep.removed);
    for (const auto& rec : rejected) {
      ASSERT_FALSE(rec.verdicts.empty());
      EXPECT_FALSE(rec.verdicts.back().pass) << rec.record_id;
      EXPECT_EQ(rec.verdicts.back().stage, std::string(to_string(rep.stage)));
      EXPECT_FALSE(rec.verdicts.back().reason.empty());
    }
    total_removed += rep.removed;
  }
  EXPECT_GT(total_removed, 0u);
  for (const auto& rec : read_manifest(r.last_manifest).records) {
    EXPECT_FALSE(rec.rejected());
    EXPECT_NE(rec.category, Category::unknown);
  }
}

TEST(Pipeline, DeterministicAcrossRunsAndShardCounts) {
  const auto dir = scratch("determinism");
  const auto input = synth_manifest(dir, 300, 3);
  std::map<std::string, std::string> first;
  for (std::size_t shards : {1u, 4u, 16u, 1u}) {
    const auto out = dir / ("out" + std::to_string(shards));
    fs::remove_all(out);
    Pipeline p(base_config(input, out, shards));
    ASSERT_TRUE(p.run().ok);
    auto files = outputs(out);
    if (first.empty()) first = files;
    ASSERT_EQ(files.size(), first.size());
    for (const auto& [name, body] : first) EXPECT_EQ(files[name], body) << name << " with " << shards << " shards";
  }
}

TEST(Pipeline, IngestOnlyIsIdentity) {
  const auto dir = scratch("identity");
  const auto input = synth_manifest(dir, 50, 4);
  auto cfg = base_config(input, dir / "out");
  cfg.stages = {Stage::ingest};
  Pipeline only(cfg);
  const auto r = only.run();
  ASSERT_TRUE(r.ok);
  EXPECT_EQ(slurp(r.last_manifest), slurp(input));
}

TEST(Pipeline, StageFailureWritesResumeTokenAndResumeCompletes) {
  const auto dir = scratch("resume");
  const auto input = synth_manifest(dir, 200, 5);

  auto clean_cfg = base_config(input, dir / "clean");
  ASSERT_TRUE(Pipeline(clean_cfg).run().ok);

  auto broken = base_config(input, dir / "out", 1, "[pack]\nmax_samples = 3\n");
  const auto r = Pipeline(broken).run();
  EXPECT_FALSE(r.ok);
  ASSERT_TRUE(r.failed_stage.has_value());
  EXPECT_EQ(*r.failed_stage, Stage::pack);
  EXPECT_NE(r.error.find("max_samples"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "out" / stage_dir_name(Stage::plan) / "manifest.jsonl"));

  const auto token = Pipeline::read_resume_token(dir / "out");
  EXPECT_EQ(token.stage, Stage::pack);
  auto fixed = base_config(input, dir / "out");
  const auto resumed = Pipeline(fixed).run(token);
  ASSERT_TRUE(resumed.ok) << resumed.error;
  ASSERT_EQ(resumed.reports.size(), 1u);
  EXPECT_FALSE(fs::exists(dir / "out" / "RESUME.json"));
  EXPECT_EQ(slurp(dir / "out" / stage_dir_name(Stage::pack) / "packs.jsonl"),
            slurp(dir / "clean" / stage_dir_name(Stage::pack) / "packs.jsonl"));
}

TEST(Pipeline, MissingInputFailsIngest) {
  const auto dir = scratch("missing");
  const auto r = Pipeline(base_config(dir / "nope.jsonl", dir / "out")).run();
  EXPECT_FALSE(r.ok);
  EXPECT_EQ(*r.failed_stage, Stage::ingest);
  EXPECT_THROW(Pipeline::read_resume_token(dir / "elsewhere"), std::runtime_error);
}

TEST(Pipeline, SubsetStartingMidwayReadsGivenManifest) {
  const auto dir = scratch("subset");
  const auto input = synth_manifest(dir, 120, 6);
  auto cfg = base_config(input, dir / "out");
  cfg.stages = {Stage::filter};
  const auto r = Pipeline(cfg).run();
  ASSERT_TRUE(r.ok) << r.error;
  EXPECT_EQ(r.reports[0].records_in, 120u);
}

#ifdef CAPCURATE_CLI
namespace {
int cli(const std::string& args) {
  const int rc = std::system((std::string(CAPCURATE_CLI) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}
}  // namespace

TEST(Cli, ExitCodes) {
  const auto dir = scratch("cli");
  EXPECT_EQ(cli("synth --records 80 --seed 2 --out " + (dir / "in.jsonl").string()), 0);
  const std::string demo_cfg = std::string(CAPCURATE_SOURCE_DIR) + "/demo/pipeline.ini";
  EXPECT_EQ(cli("run -c " + demo_cfg + " -i " + (dir / "in.jsonl").string() + " -o " + (dir / "out").string()), 0);
  // The unscaled 600e9-token budget cannot be met by upsampling 80 records.
  EXPECT_EQ(cli("run -i " + (dir / "in.jsonl").string() + " -o " + (dir / "full").string()), 3);
  EXPECT_EQ(cli("report " + (dir / "out").string()), 0);
  std::ofstream(dir / "bad.ini") << "[run]\nstages = dedup, fuse\n";
  EXPECT_EQ(cli("run -c " + (dir / "bad.ini").string()), 2);
  EXPECT_EQ(cli("run --no-such-flag"), 2);
  EXPECT_EQ(cli("run -i " + (dir / "absent.jsonl").string() + " -o " + (dir / "out2").string()), 3);
  EXPECT_TRUE(fs::exists(dir / "out2" / "RESUME.json"));
}
#endif
