#pragma once

// Mixed-modality sequence packing. Audio-target and text-target samples are
// fused into the same fixed-length sequences so that no training sequence is
// made only of high-loss audio targets or only of low-loss text targets.

#include <algorithm>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "core.hpp"

namespace capcurate {

enum class Role { prompt, target };
enum class Modality { text, audio };

inline std::string_view to_string(Role r) { return r == Role::prompt ? "prompt" : "target"; }
inline std::string_view to_string(Modality m) { return m == Modality::text ? "text" : "audio"; }

class PackError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SampleSegment {
  Role role = Role::prompt;
  Modality modality = Modality::text;
  std::size_t length = 0;
};

struct PackSample {
  std::string record_id;
  Modality target = Modality::text;  // which queue the sample belongs to
  std::vector<SampleSegment> segments;

  std::size_t length() const {
    std::size_t n = 0;
    for (const auto& s : segments) n += s.length;
    return n;
  }
  std::size_t target_length() const {
    std::size_t n = 0;
    for (const auto& s : segments)
      if (s.role == Role::target) n += s.length;
    return n;
  }
};

struct PackedSegment {
  std::string record_id;
  Role role = Role::prompt;
  Modality modality = Modality::text;
  std::size_t begin = 0;  // token span [begin, end) within the pack
  std::size_t end = 0;
};

struct PackedSequence {
  std::size_t pack_id = 0;
  std::size_t context_length = 0;
  std::vector<PackedSegment> segments;
  std::size_t used = 0;
  std::size_t samples = 0;
  bool mixed = false;

  std::size_t padding() const { return context_length - used; }
  double utilization() const { return context_length ? static_cast<double>(used) / static_cast<double>(context_length) : 0.0; }
};

struct PackResult {
  std::vector<PackedSequence> packs;
  std::vector<std::pair<std::string, std::string>> rejected;  // (record_id, reason)
  std::vector<std::string> empty_target;                      // placed, but all-zero loss mask
  std::size_t single_modality_packs = 0;
  std::size_t unmixable_packs = 0;  // both queues nonempty, yet no pair fit together

  std::size_t total_tokens() const {
    std::size_t n = 0;
    for (const auto& p : packs) n += p.used;
    return n;
  }
  double utilization() const {
    std::size_t cap = 0;
    for (const auto& p : packs) cap += p.context_length;
    return cap ? static_cast<double>(total_tokens()) / static_cast<double>(cap) : 0.0;
  }
};

/// Loss mask over the full context: 1 on target spans, 0 on prompt spans
/// and padding. Throws PackError for out-of-range or overlapping spans.
inline std::vector<std::uint8_t> build_loss_mask(const PackedSequence& pack) {
  std::vector<const PackedSegment*> segs;
  for (const auto& s : pack.segments) {
    if (s.begin > s.end || s.end > pack.context_length) throw PackError("segment span out of range for " + s.record_id);
    segs.push_back(&s);
  }
  std::sort(segs.begin(), segs.end(), [](auto* a, auto* b) { return a->begin < b->begin; });
  for (std::size_t i = 1; i < segs.size(); ++i)
    if (segs[i]->begin < segs[i - 1]->end) throw PackError("overlapping segments in pack " + std::to_string(pack.pack_id));

  std::vector<std::uint8_t> mask(pack.context_length, 0);
  for (const auto* s : segs)
    if (s->role == Role::target) std::fill(mask.begin() + static_cast<std::ptrdiff_t>(s->begin), mask.begin() + static_cast<std::ptrdiff_t>(s->end), 1);
  return mask;
}

/// Alternating first-fit-decreasing. Two queues (audio-target, text-target)
/// are kept sorted by length, descending. Each pack opens with the largest
/// sample that still leaves room for the smallest sample of the other queue,
/// then alternates between queues taking the largest sample that fits, until
/// neither queue has a sample that fits. Samples are never split; samples
/// longer than the context are rejected as "oversize".
inline PackResult pack(const std::vector<PackSample>& samples, std::size_t context_length) {
  if (context_length == 0) throw PackError("context length must be positive");
  PackResult res;

  struct Entry {
    std::size_t length;
    const std::string* id;
    std::size_t index;
  };
  struct Longer {
    bool operator()(const Entry& a, const Entry& b) const {
      if (a.length != b.length) return a.length > b.length;
      if (*a.id != *b.id) return *a.id < *b.id;
      return a.index < b.index;
    }
  };
  using Queue = std::multiset<Entry, Longer>;
  Queue queues[2];  // [audio, text]
  auto qidx = [](Modality m) { return m == Modality::audio ? 0 : 1; };

  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const std::size_t len = s.length();
    if (len > context_length) {
      res.rejected.emplace_back(s.record_id, "oversize");
      continue;
    }
    queues[qidx(s.target)].insert({len, &s.record_id, i});
  }

  static const std::string kEmpty;
  // Largest entry with length <= room, or end().
  auto fit = [&](Queue& q, std::size_t room) { return q.lower_bound(Entry{room, &kEmpty, 0}); };

  while (!queues[0].empty() || !queues[1].empty()) {
    PackedSequence pk;
    pk.pack_id = res.packs.size();
    pk.context_length = context_length;
    bool has[2] = {false, false};

    auto place = [&](int q, Queue::iterator it) {
      const auto& s = samples[it->index];
      for (const auto& seg : s.segments) {
        pk.segments.push_back({s.record_id, seg.role, seg.modality, pk.used, pk.used + seg.length});
        pk.used += seg.length;
      }
      if (s.target_length() == 0) res.empty_target.push_back(s.record_id);
      ++pk.samples;
      has[q] = true;
      queues[q].erase(it);
    };

    const bool both = !queues[0].empty() && !queues[1].empty();
    int start = queues[1].empty() || (!queues[0].empty() && queues[0].begin()->length >= queues[1].begin()->length) ? 0 : 1;
    int last = start;
    if (both) {
      bool opened = false;
      for (int attempt = 0; attempt < 2 && !opened; ++attempt) {
        const int q = attempt == 0 ? start : 1 - start;
        const std::size_t other_min = std::prev(queues[1 - q].end())->length;
        if (other_min > context_length) continue;
        auto it = fit(queues[q], context_length - other_min);
        if (it != queues[q].end()) {
          place(q, it);
          last = q;
          opened = true;
        }
      }
      if (!opened) {
        ++res.unmixable_packs;
        place(start, queues[start].begin());
        last = start;
      }
    } else {
      place(start, queues[start].begin());
    }

    for (;;) {
      const std::size_t room = context_length - pk.used;
      const int want = 1 - last;
      if (auto it = fit(queues[want], room); it != queues[want].end()) {
        place(want, it);
        last = want;
        continue;
      }
      if (auto it = fit(queues[last], room); it != queues[last].end()) {
        place(last, it);
        continue;
      }
      break;
    }

    pk.mixed = has[0] && has[1];
    if (!pk.mixed) ++res.single_modality_packs;
    res.packs.push_back(std::move(pk));
  }
  return res;
}

inline Json pack_to_json(const PackedSequence& p) {
  Json j = Json::object();
  j["pack_id"] = p.pack_id;
  Json segs = Json::array();
  for (const auto& s : p.segments) {
    Json o = Json::object();
    o["record_id"] = s.record_id;
    o["role"] = std::string(to_string(s.role));
    o["modality"] = std::string(to_string(s.modality));
    o["begin"] = s.begin;
    o["end"] = s.end;
    segs.push_back(std::move(o));
  }
  j["segments"] = std::move(segs);
  j["used"] = p.used;
  j["padding"] = p.padding();
  j["utilization"] = p.utilization();
  j["mixed"] = p.mixed;
  return j;
}

}  // namespace capcurate
