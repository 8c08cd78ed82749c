#pragma once

// Token-budget mixture planning. The global budget is split across
// directions (text-to-audio : audio-to-text : text-only), then each audio
// direction is split across categories. Per-bucket weights say how many
// times each available token must be seen.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "core.hpp"

namespace capcurate {

enum class Direction { t2a, a2t, text_only };

inline constexpr Direction kDirections[] = {Direction::t2a, Direction::a2t, Direction::text_only};

inline std::string_view to_string(Direction d) {
  switch (d) {
    case Direction::t2a: return "t2a";
    case Direction::a2t: return "a2t";
    case Direction::text_only: break;
  }
  return "text_only";
}

class PlanError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BudgetSpec {
  std::uint64_t total_tokens = 600'000'000'000ULL;
  std::array<double, 3> direction_ratio{2.0, 1.0, 1.0};  // t2a, a2t, text_only
  std::array<double, 3> category_ratio{1.0, 1.0, 1.0};   // speech, music, sfx
};

/// Integer apportionment of `total` proportional to `ratios` by the largest
/// remainder method; the result always sums to `total`. Remainder ties go to
/// the earlier entry.
inline std::vector<std::uint64_t> largest_remainder(std::uint64_t total, std::span<const double> ratios) {
  long double sum = 0;
  for (double r : ratios) {
    if (!(r >= 0.0) || !std::isfinite(r)) throw PlanError("ratios must be finite and >= 0");
    sum += r;
  }
  if (!(sum > 0)) throw PlanError("ratios must not all be zero");

  std::vector<std::uint64_t> out(ratios.size());
  std::vector<long double> frac(ratios.size());
  std::uint64_t assigned = 0;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    const long double quota = static_cast<long double>(total) * ratios[i] / sum;
    const long double fl = std::floor(quota);
    out[i] = static_cast<std::uint64_t>(fl);
    frac[i] = quota - fl;
    assigned += out[i];
  }
  // Guard against quota rounding pushing the floor sum over the total.
  while (assigned > total) {
    auto it = std::max_element(out.begin(), out.end());
    --*it;
    --assigned;
  }
  std::vector<std::size_t> order(ratios.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t k = 0; assigned < total; k = (k + 1) % order.size()) {
    if (ratios[order[k]] == 0.0) continue;
    ++out[order[k]];
    ++assigned;
  }
  return out;
}

struct Bucket {
  Direction direction = Direction::t2a;
  Category category = Category::unknown;  // unknown for text_only
  std::uint64_t target_tokens = 0;
  std::uint64_t available_tokens = 0;
  double weight = 0.0;

  bool upsampled() const { return weight > 1.0; }
  std::string name() const {
    std::string n(to_string(direction));
    if (direction != Direction::text_only) n += "/" + std::string(to_string(category));
    return n;
  }
};

/// Available tokens per bucket. text_only uses Category::unknown.
struct Inventory {
  std::array<std::array<std::uint64_t, 3>, 2> audio{};  // [t2a|a2t][speech|music|sfx]
  std::uint64_t text_only = 0;

  std::uint64_t& at(Direction d, Category c) {
    if (d == Direction::text_only) return text_only;
    return audio[static_cast<std::size_t>(d)][static_cast<std::size_t>(c)];
  }
  std::uint64_t at(Direction d, Category c) const {
    if (d == Direction::text_only) return text_only;
    return audio[static_cast<std::size_t>(d)][static_cast<std::size_t>(c)];
  }
};

struct MixturePlan {
  std::uint64_t total_tokens = 0;
  std::vector<Bucket> buckets;  // t2a x3, a2t x3, text_only

  const Bucket& bucket(Direction d, Category c = Category::unknown) const {
    for (const auto& b : buckets)
      if (b.direction == d && (d == Direction::text_only || b.category == c)) return b;
    throw PlanError("no such bucket");
  }
  std::uint64_t direction_total(Direction d) const {
    std::uint64_t s = 0;
    for (const auto& b : buckets)
      if (b.direction == d) s += b.target_tokens;
    return s;
  }
  std::vector<const Bucket*> upsample_report() const {
    std::vector<const Bucket*> out;
    for (const auto& b : buckets)
      if (b.upsampled()) out.push_back(&b);
    return out;
  }
};

inline MixturePlan allocate(const BudgetSpec& budget, const Inventory& inventory) {
  MixturePlan plan;
  plan.total_tokens = budget.total_tokens;
  const auto per_dir = largest_remainder(budget.total_tokens, budget.direction_ratio);
  for (Direction d : kDirections) {
    const auto di = static_cast<std::size_t>(d);
    if (d == Direction::text_only) {
      plan.buckets.push_back({d, Category::unknown, per_dir[di], 0, 0.0});
      continue;
    }
    const auto per_cat = largest_remainder(per_dir[di], budget.category_ratio);
    for (Category c : kAudioCategories) plan.buckets.push_back({d, c, per_cat[static_cast<std::size_t>(c)], 0, 0.0});
  }
  for (auto& b : plan.buckets) {
    b.available_tokens = inventory.at(b.direction, b.category);
    if (b.target_tokens == 0) continue;
    if (b.available_tokens == 0) throw PlanError("bucket " + b.name() + " has a nonzero target but no available tokens");
    b.weight = static_cast<double>(b.target_tokens) / static_cast<double>(b.available_tokens);
  }
  return plan;
}

/// Realizes a fractional weight for one record: floor(weight) full passes
/// plus one more with probability frac(weight), drawn from the record seed.
inline std::uint64_t repeat_count(double weight, const SeedContext& seed, std::string_view stream = "repeat") {
  if (!(weight >= 0.0) || !std::isfinite(weight)) throw PlanError("weight must be finite and >= 0");
  const double whole = std::floor(weight);
  auto rng = seed.engine(stream);
  return static_cast<std::uint64_t>(whole) + (unit_uniform(rng) < weight - whole ? 1 : 0);
}

inline Json plan_to_json(const MixturePlan& plan) {
  Json j = Json::object();
  j["total_tokens"] = plan.total_tokens;
  Json dirs = Json::object();
  for (Direction d : kDirections) dirs[std::string(to_string(d))] = plan.direction_total(d);
  j["direction_totals"] = std::move(dirs);
  Json arr = Json::array();
  for (const auto& b : plan.buckets) {
    Json o = Json::object();
    o["bucket"] = b.name();
    o["target_tokens"] = b.target_tokens;
    o["available_tokens"] = b.available_tokens;
    o["weight"] = b.weight;
    o["upsampled"] = b.upsampled();
    arr.push_back(std::move(o));
  }
  j["buckets"] = std::move(arr);
  return j;
}

/// Plain-text budget table.
inline std::string format_plan(const MixturePlan& plan) {
  std::ostringstream os;
  os << "bucket            target_tokens   available_tokens   weight\n";
  for (const auto& b : plan.buckets) {
    os.width(16);
    os << std::left << b.name() << "  ";
    os.width(14);
    os << std::right << b.target_tokens << "   ";
    os.width(16);
    os << b.available_tokens << "   " << b.weight << (b.upsampled() ? "  (upsampled)" : "") << '\n';
  }
  os << "total             " << plan.total_tokens << '\n';
  return os.str();
}

}  // namespace capcurate
