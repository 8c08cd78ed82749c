#include <gtest/gtest.h>

#include <cstdlib>
#include <deque>
#include <fstream>
#include <set>

#include "capcurate/sft.hpp"

using namespace capcurate;

namespace {

CurationRecord record(const std::string& id, const std::string& caption) {
  CurationRecord r;
  r.record_id = id;
  r.audio_ref = "audio/" + id + ".wav";
  r.caption = caption;
  return r;
}

const std::string kCaption =
    "A woman speaks calmly in a small reverberant room while rain taps on a window and a kettle starts to whistle "
    "in the background near the end of the clip";

JudgeClient mock_client() { return JudgeClient(std::make_shared<MockTransport>()); }

// Answers sft_judge calls with a fixed score list per call; other tasks go to the mock.
class ScoreTransport : public Transport {
 public:
  std::deque<Json> scores;

  Json call(const Json& request, double timeout_s) override {
    if (request.value("task", "") != "sft_judge" || scores.empty()) return inner_.call(request, timeout_s);
    Json step = scores.front();
    scores.pop_front();
    if (step.is_string()) throw TransportError("judge offline");
    Json result = Json::object();
    for (std::size_t d = 0; d < kJudgeDimensions.size(); ++d) result[kJudgeDimensions[d]] = step[d];
    return Json{{"record_id", request["record_id"]}, {"result", result}};
  }

 private:
  MockTransport inner_;
};

SftSample complete_sample(const std::string& id) {
  SftSample s;
  s.sample_id = id;
  s.audio_ref = "a.wav";
  s.user_request = "what is the sound";
  s.rich_caption = "a dog barks";
  s.cot = "caption mentions a dog";
  s.answer = "a dog";
  return s;
}

std::string golden(const std::string& name) { return std::string(CAPCURATE_SOURCE_DIR) + "/tests/golden/" + name; }

void check_golden(const std::string& name, const Json& got) {
  if (std::getenv("CAPCURATE_UPDATE_GOLDEN")) std::ofstream(golden(name)) << got.dump(2) << "\n";
  std::ifstream in(golden(name));
  ASSERT_TRUE(in) << "missing " << golden(name);
  EXPECT_EQ(Json::parse(in), got);
}

}  // namespace

TEST(SftJudgeScores, MeanAboveThreeBoundary) {
  EXPECT_FALSE((SftJudgeScores{{3, 3, 3, 3, 3}}).retained());
  EXPECT_DOUBLE_EQ((SftJudgeScores{{3, 3, 3, 3, 3}}).mean(), 3.0);
  EXPECT_TRUE((SftJudgeScores{{4, 3, 3, 3, 3}}).retained());
  EXPECT_DOUBLE_EQ((SftJudgeScores{{4, 3, 3, 3, 3}}).mean(), 3.2);
  EXPECT_TRUE((SftJudgeScores{{5, 5, 5, 5, 5}}).retained());
  EXPECT_FALSE((SftJudgeScores{{1, 1, 1, 1, 1}}).retained());
}

TEST(SftJudgeScores, RetentionAgreesWithMeanOverAllScoreVectors) {
  for (int code = 0; code < 3125; ++code) {
    SftJudgeScores s;
    int c = code;
    double total = 0;
    for (auto& v : s.scores) {
      v = 1 + c % 5;
      c /= 5;
      total += v;
    }
    ASSERT_EQ(s.retained(), total / 5.0 > 3.0) << code;
    auto perm = s;
    std::reverse(perm.scores.begin(), perm.scores.end());
    ASSERT_EQ(perm.retained(), s.retained());
  }
}

TEST(SftTemplate, FieldOrders) {
  SftSample u = complete_sample("u");
  std::vector<std::string> names;
  for (const auto& [n, t] : u.sequence()) names.push_back(n);
  EXPECT_EQ(names, (std::vector<std::string>{"audio", "user_request", "rich_caption", "cot", "answer"}));

  u.kind = SftKind::generation;
  names.clear();
  for (const auto& [n, t] : u.sequence()) names.push_back(n);
  EXPECT_EQ(names, (std::vector<std::string>{"user_request", "cot", "rich_caption", "audio"}));
}

TEST(SftTemplate, UnderstandingGolden) {
  auto client = mock_client();
  DiversityConfig cfg;
  cfg.seed = 7;
  cfg.requests_per_pair = 2;
  auto out = simulate_understanding(record("clip-1", kCaption), client, cfg);
  ASSERT_EQ(out.samples.size(), 2u);
  Json j = Json::array();
  for (const auto& s : out.samples) j.push_back(sample_to_json(s));
  check_golden("sft_understanding.json", j);
}

TEST(SftTemplate, GenerationGolden) {
  auto client = mock_client();
  DiversityConfig cfg;
  cfg.seed = 7;
  cfg.requests_per_pair = 2;
  auto out = simulate_generation(record("clip-1", kCaption), client, cfg);
  ASSERT_EQ(out.samples.size(), 2u);
  Json j = Json::array();
  for (const auto& s : out.samples) j.push_back(sample_to_json(s));
  check_golden("sft_generation.json", j);
}

TEST(SimulateUnderstanding, CompositionalReferencesSeveralAttributes) {
  auto client = mock_client();
  DiversityConfig cfg;
  cfg.compositional_prob = 1.0;
  cfg.requests_per_pair = 4;
  for (int r = 0; r < 10; ++r) {
    auto out = simulate_understanding(record("r" + std::to_string(r), kCaption), client, cfg);
    ASSERT_EQ(out.samples.size(), 4u);
    for (const auto& s : out.samples) {
      EXPECT_EQ(s.strategy, "compositional");
      EXPECT_GE(s.attributes.size(), 2u);
      std::set<std::string> distinct(s.attributes.begin(), s.attributes.end());
      EXPECT_EQ(distinct.size(), s.attributes.size());
      for (const auto& a : s.attributes) EXPECT_NE(s.user_request.find("[attr:" + a + "]"), std::string::npos);
    }
  }
}

TEST(SimulateUnderstanding, ZeroCompositionalGivesSingleAttribute) {
  auto client = mock_client();
  DiversityConfig cfg;
  cfg.compositional_prob = 0.0;
  auto out = simulate_understanding(record("r", kCaption), client, cfg);
  for (const auto& s : out.samples) {
    EXPECT_EQ(s.strategy, "attribute");
    EXPECT_EQ(s.attributes.size(), 1u);
  }
}

TEST(SimulateGeneration, ImaginaryProbabilityControlsStyle) {
  auto client = mock_client();
  DiversityConfig cfg;
  cfg.imaginary_prob = 0.0;
  cfg.requests_per_pair = 5;
  for (const auto& s : simulate_generation(record("g", kCaption), client, cfg).samples) {
    EXPECT_EQ(s.strategy, "persona-explicit");
    EXPECT_NE(s.user_request.find("[persona:" + s.persona + "]"), std::string::npos);
    EXPECT_NE(std::find(cfg.personas.begin(), cfg.personas.end(), s.persona), cfg.personas.end());
  }
  cfg.imaginary_prob = 1.0;
  for (const auto& s : simulate_generation(record("g", kCaption), client, cfg).samples)
    EXPECT_EQ(s.strategy, "persona-imaginary");
}

TEST(SimulateAll, CountBoundedAndDeterministic) {
  std::vector<CurationRecord> recs;
  for (int i = 0; i < 12; ++i) recs.push_back(record("rec" + std::to_string(i), kCaption + " take " + std::to_string(i)));
  DiversityConfig cfg;
  cfg.seed = 3;
  for (SftKind kind : {SftKind::understanding, SftKind::generation}) {
    auto client = mock_client();
    auto a = simulate_all(recs, kind, client, cfg, 1);
    auto b = simulate_all(recs, kind, client, cfg, 4);
    EXPECT_LE(a.samples.size(), cfg.requests_per_pair * recs.size());
    ASSERT_EQ(a.samples.size(), b.samples.size());
    for (std::size_t i = 0; i < a.samples.size(); ++i) EXPECT_EQ(sample_to_json(a.samples[i]), sample_to_json(b.samples[i]));
    for (const auto& s : a.samples) EXPECT_TRUE(s.complete());
  }
}

TEST(SimulateAll, SeedChangesDraws) {
  std::vector<CurationRecord> recs{record("x", kCaption)};
  DiversityConfig c1, c2;
  c1.requests_per_pair = c2.requests_per_pair = 6;
  c2.seed = 99;
  auto client = mock_client();
  auto a = simulate_all(recs, SftKind::understanding, client, c1);
  auto b = simulate_all(recs, SftKind::understanding, client, c2);
  bool differ = false;
  for (std::size_t i = 0; i < a.samples.size(); ++i) differ |= a.samples[i].attributes != b.samples[i].attributes;
  EXPECT_TRUE(differ);
}

TEST(Simulate, RejectsBadConfigAndMissingCaption) {
  auto client = mock_client();
  DiversityConfig cfg;
  EXPECT_THROW(simulate_understanding(record("e", ""), client, cfg), std::invalid_argument);
  cfg.attributes.clear();
  EXPECT_THROW(simulate_understanding(record("e", kCaption), client, cfg), std::invalid_argument);
  cfg = DiversityConfig{};
  cfg.imaginary_prob = 1.5;
  EXPECT_THROW(simulate_generation(record("e", kCaption), client, cfg), std::invalid_argument);
}

TEST(FilterByJudge, RetainsOnlyMeanAboveThree) {
  auto t = std::make_shared<ScoreTransport>();
  t->scores = {Json{3, 3, 3, 3, 3}, Json{4, 3, 3, 3, 3}, Json{5, 5, 5, 5, 5}, Json{3, 4, 3, 3, 3}};
  JudgeClient client(t);
  std::vector<SftSample> s{complete_sample("a"), complete_sample("b"), complete_sample("c"), complete_sample("d")};
  auto out = filter_by_judge(s, client);
  EXPECT_EQ(out.report.judged, 4u);
  EXPECT_EQ(out.report.rejected, 1u);
  EXPECT_EQ(out.report.retained, 3u);
  ASSERT_EQ(out.retained.size(), 3u);
  EXPECT_EQ(out.retained[0].sample_id, "b");
  EXPECT_EQ(out.report.histogram[0][2], 2u);  // dimension 0 scored 3 twice
  EXPECT_EQ(out.report.histogram[0][4], 1u);
}

TEST(FilterByJudge, JudgeFailureCountedSeparately) {
  auto t = std::make_shared<ScoreTransport>();
  t->scores = {Json{4, 4, 4, 4, 4}};
  for (int i = 0; i < 10; ++i) t->scores.push_back("down");
  JudgeClient client(t);
  auto out = filter_by_judge({complete_sample("ok"), complete_sample("lost")}, client);
  EXPECT_EQ(out.report.retained, 1u);
  EXPECT_EQ(out.report.rejected, 0u);
  EXPECT_EQ(out.report.failed, 1u);
  ASSERT_EQ(out.report.failures.size(), 1u);
  EXPECT_EQ(out.report.failures[0].first, "lost");
}

TEST(FilterByJudge, IncompleteSampleRejectedUpFront) {
  auto client = mock_client();
  auto s = complete_sample("x");
  s.cot.clear();
  EXPECT_THROW(filter_by_judge({s}, client), std::invalid_argument);
}

TEST(FilterByJudge, MockRunIsDeterministicAcrossWorkers) {
  std::vector<CurationRecord> recs;
  for (int i = 0; i < 8; ++i) recs.push_back(record("m" + std::to_string(i), kCaption));
  auto client = mock_client();
  auto sims = simulate_all(recs, SftKind::understanding, client, DiversityConfig{});
  auto a = filter_by_judge(sims.samples, client, 1);
  auto b = filter_by_judge(sims.samples, client, 3);
  EXPECT_EQ(a.report.to_json(), b.report.to_json());
  EXPECT_EQ(a.report.judged, sims.samples.size());
  for (const auto& s : a.retained) EXPECT_GT(s.judge->mean(), 3.0);
}

TEST(DataFiles, MatchBuiltInDefaults) {
  const auto attrs = load_list(std::string(CAPCURATE_SOURCE_DIR) + "/data/attributes.txt");
  const auto personas = load_list(std::string(CAPCURATE_SOURCE_DIR) + "/data/personas.txt");
  ASSERT_EQ(attrs.size(), kDefaultAttributes.size());
  ASSERT_EQ(personas.size(), kDefaultPersonas.size());
  for (std::size_t i = 0; i < attrs.size(); ++i) EXPECT_EQ(attrs[i], kDefaultAttributes[i]);
  for (std::size_t i = 0; i < personas.size(); ++i) EXPECT_EQ(personas[i], kDefaultPersonas[i]);
  EXPECT_THROW(load_list("/nonexistent/list.txt"), std::runtime_error);
}
