#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "core.hpp"

namespace capcurate {

enum class SegmentMode { sequential, random };

struct Window {
  double start_s = 0.0;
  double end_s = 0.0;
  double length() const { return end_s - start_s; }
  bool operator==(const Window&) const = default;
};

struct SegmentPlan {
  std::vector<Window> windows;
};

/// Splits a clip into windows of at most max_len_s seconds. Sequential mode
/// tiles [0, duration] by time (no silence detection); random mode keeps one
/// window whose start is uniform in [0, duration - max_len].
inline SegmentPlan segment_plan(double duration_s, double max_len_s, SegmentMode mode, const SeedContext& seed) {
  if (!(duration_s > 0.0) || !std::isfinite(duration_s))
    throw std::invalid_argument("segment_plan: duration must be positive");
  if (!(max_len_s > 0.0) || !std::isfinite(max_len_s))
    throw std::invalid_argument("segment_plan: max_len must be positive");

  SegmentPlan plan;
  if (mode == SegmentMode::sequential) {
    // Both edges come from i * max_len so adjacent windows share them exactly.
    for (std::size_t i = 0;; ++i) {
      const double start = static_cast<double>(i) * max_len_s;
      if (start >= duration_s) break;
      plan.windows.push_back({start, std::min(static_cast<double>(i + 1) * max_len_s, duration_s)});
    }
    return plan;
  }

  if (duration_s <= max_len_s) {
    plan.windows.push_back({0.0, duration_s});
    return plan;
  }
  auto rng = seed.engine("segment");
  const double start = unit_uniform(rng) * (duration_s - max_len_s);
  plan.windows.push_back({start, start + max_len_s});
  return plan;
}

}  // namespace capcurate
