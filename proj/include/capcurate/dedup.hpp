#pragma once

// Near-duplicate caption removal: MinHash signatures over word shingles,
// LSH banding for candidate pairs, verification, then connected components.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include "core.hpp"
#include "parallel.hpp"

namespace capcurate {

struct MinHashParams {
  std::size_t num_perm = 126;
  std::size_t shingle_w = 5;
  std::uint64_t seed = 0x6D696E68617368ULL;
};

struct MinHashSignature {
  std::vector<std::uint64_t> hashes;
  std::size_t shingle_count = 0;
  bool short_text = false;  // fewer than w words: whole caption is one shingle
};

/// Lowercases ASCII letters and collapses whitespace runs to one space.
inline std::string normalize_caption(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (auto w : split_whitespace(text)) {
    if (!out.empty()) out.push_back(' ');
    for (char c : w) out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

/// Base hashes of the distinct word w-shingles of a caption.
inline std::vector<std::uint64_t> shingle_hashes(std::string_view caption, std::size_t w, bool* short_text = nullptr) {
  const std::string norm = normalize_caption(caption);
  const auto words = split_whitespace(norm);
  std::vector<std::uint64_t> out;
  if (short_text) *short_text = words.size() < w;
  if (words.empty()) return out;
  if (words.size() < w) {
    out.push_back(hash64(norm));
    return out;
  }
  out.reserve(words.size() - w + 1);
  for (std::size_t i = 0; i + w <= words.size(); ++i) {
    const char* begin = words[i].data();
    const char* end = words[i + w - 1].data() + words[i + w - 1].size();
    out.push_back(hash64(std::string_view(begin, static_cast<std::size_t>(end - begin))));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

/// Per-permutation salts; hash family p maps x to splitmix64(x ^ salt[p]).
inline std::vector<std::uint64_t> permutation_salts(const MinHashParams& params) {
  std::vector<std::uint64_t> salts(params.num_perm);
  for (std::size_t p = 0; p < salts.size(); ++p) salts[p] = splitmix64(params.seed + 0x9E3779B97F4A7C15ULL * (p + 1));
  return salts;
}

inline MinHashSignature signature_from_shingles(std::span<const std::uint64_t> shingles, const MinHashParams& params,
                                                std::span<const std::uint64_t> salts) {
  if (params.num_perm == 0) throw std::invalid_argument("MinHash needs at least one permutation");
  MinHashSignature sig;
  sig.hashes.assign(params.num_perm, UINT64_MAX);
  sig.shingle_count = shingles.size();
  for (std::uint64_t x : shingles)
    for (std::size_t p = 0; p < params.num_perm; ++p) sig.hashes[p] = std::min(sig.hashes[p], splitmix64(x ^ salts[p]));
  return sig;
}

inline MinHashSignature signature_from_shingles(std::span<const std::uint64_t> shingles, const MinHashParams& params) {
  const auto salts = permutation_salts(params);
  return signature_from_shingles(shingles, params, salts);
}

inline MinHashSignature minhash_signature(std::string_view caption, const MinHashParams& params = {}) {
  bool short_text = false;
  const auto sh = shingle_hashes(caption, params.shingle_w, &short_text);
  auto sig = signature_from_shingles(sh, params);
  sig.short_text = short_text;
  return sig;
}

/// Fraction of matching signature positions.
inline double estimated_jaccard(const MinHashSignature& a, const MinHashSignature& b) {
  if (a.hashes.size() != b.hashes.size()) throw std::invalid_argument("signature length mismatch");
  if (a.hashes.empty()) return 0.0;
  if (a.shingle_count == 0 || b.shingle_count == 0) return a.shingle_count == b.shingle_count ? 1.0 : 0.0;
  std::size_t eq = 0;
  for (std::size_t p = 0; p < a.hashes.size(); ++p) eq += a.hashes[p] == b.hashes[p];
  return static_cast<double>(eq) / static_cast<double>(a.hashes.size());
}

/// Jaccard of two sorted, de-duplicated sets.
inline double exact_jaccard(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t inter = 0, i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] == b[j]) {
      ++inter;
      ++i;
      ++j;
    } else if (a[i] < b[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

// ---------------------------------------------------------------------------
// LSH

class LshIndex {
 public:
  LshIndex(std::size_t bands, std::size_t rows) : bands_(bands), rows_(rows), tables_(bands) {
    if (bands == 0 || rows == 0) throw std::invalid_argument("LSH needs bands >= 1 and rows >= 1");
  }

  std::size_t bands() const { return bands_; }
  std::size_t rows() const { return rows_; }

  std::uint64_t band_key(const MinHashSignature& sig, std::size_t band) const {
    std::uint64_t h = 0x42414E44ULL + band;
    for (std::size_t r = 0; r < rows_; ++r) h = splitmix64(h ^ sig.hashes[band * rows_ + r]);
    return h;
  }

  /// Inserts all signatures; each band table is filled by one worker.
  void build(std::span<const MinHashSignature> sigs, std::size_t workers = 1) {
    for (const auto& s : sigs)
      if (s.hashes.size() < bands_ * rows_) throw std::invalid_argument("signature shorter than bands * rows");
    parallel_for(bands_, workers, [&](std::size_t b) {
      auto& table = tables_[b];
      table.clear();
      for (std::size_t i = 0; i < sigs.size(); ++i) table[band_key(sigs[i], b)].push_back(i);
    });
  }

  /// Unordered pairs (i < j) sharing at least one band bucket, sorted.
  std::vector<std::pair<std::size_t, std::size_t>> candidate_pairs() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (const auto& table : tables_)
      for (const auto& [key, bucket] : table)
        for (std::size_t x = 0; x < bucket.size(); ++x)
          for (std::size_t y = x + 1; y < bucket.size(); ++y)
            out.emplace_back(std::min(bucket[x], bucket[y]), std::max(bucket[x], bucket[y]));
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

 private:
  std::size_t bands_, rows_;
  std::vector<std::unordered_map<std::uint64_t, std::vector<std::size_t>>> tables_;
};

// ---------------------------------------------------------------------------
// Dedup

struct DedupConfig {
  MinHashParams minhash;
  std::size_t bands = 14;
  std::size_t rows = 9;
  double threshold = 0.8;
  bool exact_verify = false;

  void validate() const {
    if (bands * rows != minhash.num_perm)
      throw std::invalid_argument("dedup config: bands * rows (" + std::to_string(bands * rows) +
                                  ") must equal num_perm (" + std::to_string(minhash.num_perm) + ")");
    if (minhash.shingle_w == 0) throw std::invalid_argument("dedup config: shingle width must be >= 1");
  }
};

struct DedupItem {
  std::string record_id;
  std::string caption;
  double quality = 0.0;  // fused score; higher wins the keeper slot
};

struct DuplicateCluster {
  std::string keeper_id;
  std::vector<std::string> member_ids;  // sorted, includes the keeper
  double mean_estimated_jaccard = 0.0;
};

struct DedupResult {
  std::vector<bool> keep;                     // per input item
  std::vector<std::string> duplicate_of;      // keeper id for removed items, empty otherwise
  std::vector<DuplicateCluster> clusters;     // sorted by keeper_id
  std::size_t candidate_pairs = 0;
  std::size_t verified_pairs = 0;
  std::size_t short_texts = 0;

  std::size_t removed() const { return static_cast<std::size_t>(std::count(keep.begin(), keep.end(), false)); }
};

namespace detail {
struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};
}  // namespace detail

/// Keeps one record per near-duplicate component: the highest quality, ties
/// to the lexicographically smallest record_id. Results do not depend on the
/// input order.
inline DedupResult dedup(std::span<const DedupItem> items, const DedupConfig& cfg, std::size_t workers = 1) {
  cfg.validate();
  const std::size_t n = items.size();
  DedupResult res;
  res.keep.assign(n, true);
  res.duplicate_of.assign(n, {});

  const auto salts = permutation_salts(cfg.minhash);
  std::vector<std::vector<std::uint64_t>> shingles(n);
  std::vector<MinHashSignature> sigs(n);
  parallel_for(n, workers, [&](std::size_t i) {
    bool short_text = false;
    shingles[i] = shingle_hashes(items[i].caption, cfg.minhash.shingle_w, &short_text);
    sigs[i] = signature_from_shingles(shingles[i], cfg.minhash, salts);
    sigs[i].short_text = short_text;
  });
  for (const auto& s : sigs) res.short_texts += s.short_text;

  LshIndex index(cfg.bands, cfg.rows);
  index.build(sigs, workers);
  const auto candidates = index.candidate_pairs();
  res.candidate_pairs = candidates.size();

  detail::UnionFind uf(n);
  struct Edge {
    std::size_t a, b;
    double est;
  };
  std::vector<Edge> edges;
  for (auto [a, b] : candidates) {
    const double est = estimated_jaccard(sigs[a], sigs[b]);
    const double score = cfg.exact_verify ? exact_jaccard(shingles[a], shingles[b]) : est;
    if (score >= cfg.threshold) {
      edges.push_back({a, b, est});
      uf.unite(a, b);
    }
  }
  res.verified_pairs = edges.size();

  std::map<std::size_t, std::vector<std::size_t>> comps;
  for (std::size_t i = 0; i < n; ++i) comps[uf.find(i)].push_back(i);

  std::map<std::size_t, std::pair<double, std::size_t>> edge_sum;  // root -> (sum, count)
  {
    // Sum in record-id order so the mean is bitwise order independent.
    std::vector<std::tuple<std::string, std::string, double, std::size_t>> keyed;
    for (const auto& e : edges) {
      auto x = items[e.a].record_id, y = items[e.b].record_id;
      if (y < x) std::swap(x, y);
      keyed.emplace_back(std::move(x), std::move(y), e.est, uf.find(e.a));
    }
    std::sort(keyed.begin(), keyed.end());
    for (const auto& [x, y, est, root] : keyed) {
      auto& acc = edge_sum[root];
      acc.first += est;
      ++acc.second;
    }
  }

  for (const auto& [root, members] : comps) {
    if (members.size() < 2) continue;
    std::size_t keeper = members.front();
    for (std::size_t m : members) {
      const auto& a = items[m];
      const auto& b = items[keeper];
      if (a.quality > b.quality || (a.quality == b.quality && a.record_id < b.record_id)) keeper = m;
    }
    DuplicateCluster c;
    c.keeper_id = items[keeper].record_id;
    for (std::size_t m : members) {
      c.member_ids.push_back(items[m].record_id);
      if (m != keeper) {
        res.keep[m] = false;
        res.duplicate_of[m] = c.keeper_id;
      }
    }
    std::sort(c.member_ids.begin(), c.member_ids.end());
    const auto& acc = edge_sum[root];
    c.mean_estimated_jaccard = acc.second ? acc.first / static_cast<double>(acc.second) : 0.0;
    res.clusters.push_back(std::move(c));
  }
  std::sort(res.clusters.begin(), res.clusters.end(),
            [](const auto& x, const auto& y) { return x.keeper_id < y.keeper_id; });
  return res;
}

inline Json cluster_to_json(const DuplicateCluster& c) {
  Json j = Json::object();
  j["keeper_id"] = c.keeper_id;
  j["member_ids"] = c.member_ids;
  j["mean_estimated_jaccard"] = c.mean_estimated_jaccard;
  return j;
}

}  // namespace capcurate
