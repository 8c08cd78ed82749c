// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <boost/math/distributions/chi_squared.hpp>
#include <chrono>
#include <deque>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "capcurate/capcurate.hpp"
#include "oracles.hpp"
#include "rule_cases.hpp"

using namespace capcurate;
namespace fs = std::filesystem;

namespace {

// Collects failed expectations for one criterion.
struct Check {
  std::vector<std::string> failures;
  void expect(bool ok, const std::string& what) {
    if (!ok && failures.size() < 5) failures.push_back(what);
    if (!ok && failures.size() == 5) failures.push_back("...");
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double x, int prec = 6) {
  std::ostringstream os;
  os.precision(prec);
  os << x;
  return os.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// --- 1 ---------------------------------------------------------------------
void codec_layout(Check& c) {
  constexpr TokenId pad = 1 << 20;
  std::mt19937_64 g(1);
  const auto t0 = Clock::now();
  for (int i = 0; i < 1000; ++i) {
    const std::size_t T = 1 + uniform_index(g, 64), S = 8;
    CodecFrameGrid grid{T, S, pad, std::vector<TokenId>(T * S)};
    for (auto& t : grid.tokens) t = static_cast<TokenId>(g() % 4096);
    const auto d = interleave(grid);
    c.expect(d.flat.size() == (T + S - 1) * S, "flat length for T=" + std::to_string(T));
    c.expect(deinterleave(d, T, S) == grid, "round trip for T=" + std::to_string(T));
  }
  const double dt = seconds_since(t0);
  c.expect(dt < 1.0, "runtime " + fmt(dt) + " s");
}

// --- 2 ---------------------------------------------------------------------
void minhash(Check& c) {
  struct Level {
    double j;
    std::size_t size, shared;
  };
  std::mt19937_64 g(7);
  for (const Level lv : {Level{0.2, 30, 10}, Level{0.5, 30, 20}, Level{0.8, 45, 40}}) {
    double err = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<std::uint64_t> a, b;
      for (std::size_t i = 0; i < lv.size; ++i) {
        const auto x = g();
        a.push_back(x);
        b.push_back(i < lv.shared ? x : g());
      }
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      c.expect(exact_jaccard(a, b) == lv.j, "constructed pair Jaccard");
      MinHashParams p;
      p.num_perm = 128;
      p.seed = static_cast<std::uint64_t>(trial) + 1;
      err += std::abs(estimated_jaccard(signature_from_shingles(a, p), signature_from_shingles(b, p)) - lv.j);
    }
    c.expect(err / 200 <= 0.06, "mean abs error " + fmt(err / 200) + " at J=" + fmt(lv.j));
  }

  // 150 random captions plus 50 near copies, against brute-force all-pairs Jaccard.
  std::vector<DedupItem> items;
  auto caption = [&](std::size_t words) {
    std::string s;
    for (std::size_t i = 0; i < words; ++i) s += (i ? " " : "") + std::string("t") + std::to_string(uniform_index(g, 5000));
    return s;
  };
  for (int i = 0; i < 150; ++i) items.push_back({"o" + std::to_string(i), caption(40 + uniform_index(g, 30)), unit_uniform(g)});
  for (int i = 0; i < 50; ++i) {
    std::string s = items[static_cast<std::size_t>(i) * 3].caption;
    s = s.substr(0, s.rfind(' ')) + " edited";
    items.push_back({"p" + std::to_string(i), s, unit_uniform(g)});
  }
  const auto r = dedup(items, DedupConfig{});
  std::vector<std::set<std::string>> sh;
  for (const auto& it : items) sh.push_back(oracle::shingles(it.caption, 5));
  std::size_t oracle_pairs = 0;
  for (std::size_t i = 0; i < items.size(); ++i)
    for (std::size_t j = i + 1; j < items.size(); ++j)
      if (oracle::jaccard(sh[i], sh[j]) >= 0.8) {
        ++oracle_pairs;
        c.expect(!(r.keep[i] && r.keep[j]), "oracle duplicate pair both kept: " + items[i].record_id + ", " + items[j].record_id);
      }
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (r.keep[i]) continue;
    bool justified = false;
    for (std::size_t j = 0; j < items.size(); ++j)
      if (j != i && oracle::jaccard(sh[i], sh[j]) >= 0.8) justified = true;
    c.expect(justified, "false removal of " + items[i].record_id);
  }
  c.expect(oracle_pairs == 50, "oracle found " + std::to_string(oracle_pairs) + " duplicate pairs");
  c.expect(r.removed() == 50, "dedup removed " + std::to_string(r.removed()));
}

// --- 3 ---------------------------------------------------------------------
void gumbel(Check& c) {
  std::mt19937_64 g(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + uniform_index(g, 300);
    std::vector<double> s(n);
    std::vector<std::string> names;
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = std::round(unit_uniform(g) * 50) / 50;
      names.push_back("r" + std::to_string(i));
    }
    const std::size_t k = keep_count(n, 0.2);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return s[a] != s[b] ? s[a] > s[b] : names[a] < names[b]; });
    std::vector<std::size_t> want(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(want.begin(), want.end());
    c.expect(gumbel_topk(s, names, 0.0, 0.2, static_cast<std::uint64_t>(trial)).selected == want, "tau=0 trial " + std::to_string(trial));
  }

  const std::vector<double> s{0.1, 0.9, 0.4, 1.6, -0.3};
  std::vector<double> w;
  for (double x : s) w.push_back(std::exp(x));
  const auto want = oracle::plackett_luce_inclusion(w, 2);
  const std::vector<std::string> names{"a", "b", "c", "d", "e"};
  std::vector<double> freq(5, 0.0);
  const auto t0 = Clock::now();
  for (int t = 0; t < 20000; ++t)
    for (auto i : gumbel_select(s, names, 1.0, 2, static_cast<std::uint64_t>(t) * 7919 + 1)) freq[i] += 1.0 / 20000;
  const double dt = seconds_since(t0);
  for (std::size_t i = 0; i < 5; ++i)
    c.expect(std::abs(freq[i] - want[i]) <= 0.02, "item " + std::to_string(i) + " freq " + fmt(freq[i]) + " vs " + fmt(want[i]));
  c.expect(dt < 10.0, "runtime " + fmt(dt) + " s");
}

// --- 4 ---------------------------------------------------------------------
void percentile_fusion(Check& c) {
  std::mt19937_64 g(17);
  const std::vector<std::function<double(double)>> transforms = {
      [](double x) { return std::exp(x); }, [](double x) { return x * x * x + x; }, [](double x) { return 3 * x - 7; }};
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + uniform_index(g, 1000);
    std::vector<double> v(n);
    for (auto& x : v) x = std::round(unit_uniform(g) * 1000.0) / 100.0;
    for (std::size_t t = 0; t < n / 10; ++t) v[uniform_index(g, n)] = v[uniform_index(g, n)];
    const auto got = percentile_ranks(v);
    c.expect(got == oracle::percentiles(v), "oracle mismatch on trial " + std::to_string(trial));
    for (const auto& f : transforms) {
      std::vector<double> tv;
      for (double x : v) tv.push_back(f(x));
      c.expect(percentile_ranks(tv) == got, "transform changed ranks on trial " + std::to_string(trial));
    }
  }
}

// --- 5 ---------------------------------------------------------------------
void text_rules(Check& c) {
  const auto corpus = rule_cases::corpus();
  c.expect(corpus.size() == 40, "corpus has " + std::to_string(corpus.size()) + " cases");
  std::size_t agree = 0;
  for (const auto& k : corpus) {
    CurationRecord r;
    r.record_id = k.name;
    r.caption = k.caption;
    r.incomplete_flag = k.incomplete;
    const auto v = apply_rules(r, compute_text_stats(k.caption), RuleConfig{});
    const bool ok = v.pass == (k.expected_rule == 0) && v.failed_rule.value_or(0) == k.expected_rule;
    agree += ok;
    c.expect(ok, k.name + ": got rule " + std::to_string(v.failed_rule.value_or(0)) + ", want " + std::to_string(k.expected_rule));
  }
  c.expect(agree == corpus.size(), std::to_string(agree) + "/" + std::to_string(corpus.size()) + " agree");
}

// --- 6 ---------------------------------------------------------------------
void mixture(Check& c) {
  BudgetSpec b;
  b.total_tokens = 600;
  Inventory even;
  for (auto& dir : even.audio) dir.fill(100);
  even.text_only = 150;
  const auto plan = allocate(b, even);
  c.expect(plan.direction_total(Direction::t2a) == 300, "t2a total");
  c.expect(plan.direction_total(Direction::a2t) == 150, "a2t total");
  c.expect(plan.direction_total(Direction::text_only) == 150, "text-only total");
  for (Category cat : kAudioCategories) {
    c.expect(plan.bucket(Direction::t2a, cat).target_tokens == 100, "t2a/" + std::string(to_string(cat)) + " = 100");
    c.expect(plan.bucket(Direction::a2t, cat).target_tokens == 50, "a2t/" + std::string(to_string(cat)) + " = 50");
  }

  Inventory skew;
  for (Direction d : {Direction::t2a, Direction::a2t}) {
    skew.at(d, Category::speech) = 80;
    skew.at(d, Category::music) = 10;
    skew.at(d, Category::sfx) = 10;
  }
  skew.text_only = 150;
  const auto sp = allocate(b, skew);
  for (Direction d : {Direction::t2a, Direction::a2t}) {
    const double ws = sp.bucket(d, Category::speech).weight;
    for (Category cat : {Category::music, Category::sfx}) {
      const double ratio = sp.bucket(d, cat).weight / ws;
      c.expect(ratio == 8.0 / 3.0, std::string(to_string(d)) + " " + std::string(to_string(cat)) + "/speech weight ratio " +
                                       fmt(ratio) + ", criterion requires 8/3 = " + fmt(8.0 / 3.0));
    }
  }
}

// --- 7 ---------------------------------------------------------------------
PackSample pack_sample(const std::string& id, Modality target, std::size_t prompt, std::size_t tgt) {
  PackSample s;
  s.record_id = id;
  s.target = target;
  const Modality other = target == Modality::audio ? Modality::text : Modality::audio;
  if (prompt) s.segments.push_back({Role::prompt, other, prompt});
  s.segments.push_back({Role::target, target, tgt});
  return s;
}

void packing(Check& c) {
  std::mt19937_64 g(2024);
  std::lognormal_distribution<double> len(std::log(400.0), 0.5);
  std::vector<PackSample> samples;
  for (std::size_t i = 0; i < 10000; ++i) {
    const auto total = std::max<std::size_t>(2, static_cast<std::size_t>(std::llround(len(g))));
    const std::size_t prompt = 1 + uniform_index(g, total - 1);
    samples.push_back(pack_sample("s" + std::to_string(i), i % 2 ? Modality::audio : Modality::text, prompt, total - prompt));
  }
  const auto r = pack(samples, 8192);
  std::map<std::string, int> placed;
  std::map<std::string, Modality> kind;
  std::size_t left[2] = {0, 0};
  for (const auto& s : samples) {
    kind[s.record_id] = s.target;
    ++left[s.target == Modality::audio];
  }
  std::size_t over = 0, unmixed = 0;
  for (const auto& p : r.packs) {
    over += p.used > 8192;
    const bool both = left[0] && left[1];
    std::set<std::string> ids;
    for (const auto& seg : p.segments) ids.insert(seg.record_id);
    for (const auto& id : ids) {
      ++placed[id];
      --left[kind[id] == Modality::audio];
    }
    unmixed += both && !p.mixed;
  }
  c.expect(over == 0, std::to_string(over) + " packs over L");
  c.expect(r.rejected.empty(), "oversize rejections");
  c.expect(placed.size() == samples.size(), std::to_string(placed.size()) + " samples placed");
  for (const auto& [id, n] : placed) c.expect(n == 1, id + " placed " + std::to_string(n) + " times");
  c.expect(r.utilization() >= 0.80, "utilization " + fmt(r.utilization()));
  c.expect(unmixed == 0, std::to_string(unmixed) + " unmixed packs while both queues nonempty");

  std::size_t checked = 0;
  for (int round = 0; checked < 1000; ++round) {
    std::vector<PackSample> s;
    for (int i = 0; i < 200; ++i)
      s.push_back(pack_sample("r" + std::to_string(round) + "-" + std::to_string(i), i % 3 ? Modality::audio : Modality::text,
                              uniform_index(g, 100), 1 + uniform_index(g, 300)));
    for (const auto& p : pack(s, 1024).packs) {
      std::size_t want = 0;
      for (const auto& seg : p.segments)
        if (seg.role == Role::target) want += seg.end - seg.begin;
      const auto mask = build_loss_mask(p);
      c.expect(static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1)) == want, "mask popcount");
      ++checked;
    }
  }
}

// --- 8 ---------------------------------------------------------------------
void cfg_sampling(Check& c) {
  c.expect(combine_cfg(std::vector<double>{2, 0}, std::vector<double>{1, 1}, 3.0) == std::vector<double>{4, -2}, "hand example");
  std::mt19937_64 g(2);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> cond(64), uncond(64);
    for (auto& x : cond) x = unit_uniform(g) * 20 - 10;
    for (auto& x : uncond) x = unit_uniform(g) * 20 - 10;
    c.expect(combine_cfg(cond, uncond, 1.0) == cond, "gamma=1 identity");
    c.expect(combine_cfg(cond, cond, unit_uniform(g) * 10 - 2) == cond, "cond=uncond fixed point");
  }

  const std::vector<double> logits{1.2, -0.3, 0.8, 2.0, 0.1};
  for (auto [tau, k] : {std::pair{1.0, std::size_t{5}}, std::pair{0.7, std::size_t{3}}}) {
    std::vector<std::size_t> idx(logits.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return logits[a] > logits[b]; });
    std::vector<double> p(logits.size(), 0.0);
    double z = 0;
    for (std::size_t r = 0; r < k; ++r) z += p[idx[r]] = std::exp(logits[idx[r]] / tau);
    for (auto& x : p) x /= z;

    constexpr int draws = 50000;
    std::vector<double> counts(logits.size(), 0.0);
    for (int i = 0; i < draws; ++i) {
      std::mt19937_64 rng(step_seed(99, static_cast<std::size_t>(i)));
      counts[sample_topk(logits, tau, k, rng)] += 1;
    }
    double stat = 0;
    std::size_t cells = 0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
      c.expect(std::abs(counts[i] / draws - p[i]) <= 0.02, "symbol " + std::to_string(i) + " at tau " + fmt(tau));
      if (p[i] == 0) {
        c.expect(counts[i] == 0, "truncated symbol drawn");
        continue;
      }
      const double e = draws * p[i];
      stat += (counts[i] - e) * (counts[i] - e) / e;
      ++cells;
    }
    const double pval = boost::math::cdf(boost::math::complement(boost::math::chi_squared(static_cast<double>(cells - 1)), stat));
    c.expect(pval > 0.01, "chi-squared p " + fmt(pval) + " at tau " + fmt(tau) + ", k " + std::to_string(k));
  }
}

// --- 9 ---------------------------------------------------------------------
class FixedScores : public Transport {
 public:
  std::deque<std::array<int, 5>> scores;
  Json call(const Json& request, double) override {
    Json result = Json::object();
    const auto s = scores.front();
    scores.pop_front();
    for (std::size_t d = 0; d < 5; ++d) result[kJudgeDimensions[d]] = s[d];
    return Json{{"record_id", request["record_id"]}, {"result", result}};
  }
};

void sft_gate(Check& c) {
  SftSample base;
  base.sample_id = "s";
  base.audio_ref = "a.wav";
  base.user_request = "r";
  base.rich_caption = "c";
  base.cot = "t";
  base.answer = "a";
  auto t = std::make_shared<FixedScores>();
  t->scores = {{3, 3, 3, 3, 3}, {4, 3, 3, 3, 3}};
  JudgeClient client(t);
  auto a = base, b = base;
  a.sample_id = "mean-3.0";
  b.sample_id = "mean-3.2";
  const auto out = filter_by_judge({a, b}, client);
  c.expect(out.report.rejected == 1 && out.report.retained == 1, "one rejected, one retained");
  c.expect(out.retained.size() == 1 && out.retained[0].sample_id == "mean-3.2", "mean 3.2 retained, 3.0 rejected");

  const std::vector<std::string> und{"audio", "user_request", "rich_caption", "cot", "answer"};
  const std::vector<std::string> gen{"user_request", "cot", "rich_caption", "audio"};
  CurationRecord rec;
  rec.record_id = "clip-1";
  rec.audio_ref = "audio/clip-1.wav";
  rec.caption =
      "A woman speaks calmly in a small reverberant room while rain taps on a window and a kettle starts to whistle "
      "in the background near the end of the clip";
  DiversityConfig cfg;
  cfg.seed = 7;
  cfg.requests_per_pair = 2;
  JudgeClient mock(std::make_shared<MockTransport>());
  for (auto [kind, file, order] : {std::tuple{SftKind::understanding, "sft_understanding.json", und},
                                   std::tuple{SftKind::generation, "sft_generation.json", gen}}) {
    const auto sim = kind == SftKind::understanding ? simulate_understanding(rec, mock, cfg) : simulate_generation(rec, mock, cfg);
    Json got = Json::array();
    for (const auto& s : sim.samples) {
      got.push_back(sample_to_json(s));
      std::vector<std::string> names;
      for (const auto& [n, text] : s.sequence()) names.push_back(n);
      c.expect(names == order, std::string(file) + ": field order");
    }
    std::ifstream in(std::string(CAPCURATE_SOURCE_DIR) + "/tests/golden/" + file);
    c.expect(static_cast<bool>(in), std::string("missing golden ") + file);
    if (in) c.expect(Json::parse(in) == got, std::string(file) + " differs from golden");
  }
}

// --- 10 --------------------------------------------------------------------
PipelineConfig e2e_config(const fs::path& input, const fs::path& out, std::size_t shards) {
  std::istringstream in("[run]\nglobal_seed = 2024\ninput = " + input.string() + "\noutput_dir = " + out.string() +
                        "\nshard_count = " + std::to_string(shards) + "\n[budget]\ntotal_tokens = 200000\n");
  return load_config(IniDocument::parse(in), false);
}

std::map<std::string, std::string> tree(const fs::path& root, bool with_reports) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), root).string();
    if (!with_reports && rel.find("report.json") != std::string::npos) continue;
    files[rel] = slurp(e.path());
  }
  return files;
}

void end_to_end(Check& c) {
  const fs::path dir = fs::temp_directory_path() / ("capcurate-acceptance-" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  SynthConfig sc;
  sc.records = 1000;
  sc.seed = 5;
  write_manifest(dir / "input.jsonl", synth_corpus(sc));

  const auto t0 = Clock::now();
  std::map<std::string, std::string> first;
  for (int run = 0; run < 2; ++run) {
    fs::remove_all(dir / "same");
    const auto r = Pipeline(e2e_config(dir / "input.jsonl", dir / "same", 1)).run();
    c.expect(r.ok, "run " + std::to_string(run) + " failed: " + r.error);
    auto files = tree(dir / "same", true);
    if (run == 0) first = std::move(files);
    else c.expect(files == first, "second run differs (manifests or reports)");
  }

  std::map<std::string, std::string> baseline;
  for (std::size_t shards : {1u, 4u, 16u}) {
    const auto out = dir / ("shards" + std::to_string(shards));
    const auto r = Pipeline(e2e_config(dir / "input.jsonl", out, shards)).run();
    c.expect(r.ok, "shards " + std::to_string(shards) + " failed: " + r.error);
    auto files = tree(out, false);
    if (baseline.empty()) baseline = std::move(files);
    else c.expect(files == baseline, "outputs differ at shard_count " + std::to_string(shards));
  }
  const double dt = seconds_since(t0);
  c.expect(dt < 120.0, "runtime " + fmt(dt) + " s");
  fs::remove_all(dir);
}

// --- 11 --------------------------------------------------------------------
void cycle(Check& c) {
  JudgeClient cap(std::make_shared<MockTransport>()), gen(std::make_shared<MockTransport>()), emb(std::make_shared<MockTransport>());
  const CycleEndpoints ep{cap, gen, emb};
  std::vector<CycleItem> items;
  for (int i = 0; i < 50; ++i) items.push_back({"i" + std::to_string(i), "a bell rings " + std::to_string(i) + " times in a hall"});
  for (auto dir : {CycleDirection::a2t2a, CycleDirection::t2a2t}) {
    const auto r = run_cycle(items, dir, ep, 4);
    c.expect(r.failures == 0, std::string(to_string(dir)) + " failures");
    c.expect(r.mean && *r.mean == 1.0, std::string(to_string(dir)) + " mean " + (r.mean ? fmt(*r.mean, 17) : "n/a"));
  }
  const double v = cosine(std::vector<double>{1, 2, 2}, std::vector<double>{2, 1, 2});
  c.expect(std::abs(v - 8.0 / 9.0) <= 1e-12, "cosine " + fmt(v, 17));
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Check&)>>> criteria = {
      {"codec layout round trip", codec_layout},
      {"minhash estimator and dedup oracle", minhash},
      {"gumbel top-k", gumbel},
      {"percentile fusion", percentile_fusion},
      {"text rules hand-labeled corpus", text_rules},
      {"mixture plan", mixture},
      {"sequence packing", packing},
      {"cfg and top-k sampling", cfg_sampling},
      {"sft judge gate and templates", sft_gate},
      {"end-to-end determinism", end_to_end},
      {"cycle harness", cycle},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Check c;
    const auto t0 = Clock::now();
    try {
      criteria[i].second(c);
    } catch (const std::exception& e) {
      c.failures.push_back(std::string("exception: ") + e.what());
    }
    const bool ok = c.failures.empty();
    failed += !ok;
    std::printf("criterion %2zu %-38s %s (%.2f s)\n", i + 1, criteria[i].first.c_str(), ok ? "PASS" : "FAIL", seconds_since(t0));
    for (const auto& f : c.failures) std::printf("    %s\n", f.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed ? 1 : 0;
}
