#pragma once

// Gumbel top-k soft truncation of the quality tail. Adding Gumbel noise to
// score/temperature and keeping the k largest draws k items without
// replacement from the Plackett-Luce model with weights exp(score/temperature).

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "core.hpp"

namespace capcurate {

struct CategoryResample {
  double temperature = 0.3;
  double discard_fraction = 0.2;
};

struct ResampleConfig {
  std::map<Category, CategoryResample> per_category{
      {Category::speech, {0.3, 0.42}}, {Category::music, {0.3, 0.20}}, {Category::sfx, {0.3, 0.20}}};
  std::uint64_t seed = 0;

  /// Pre-training curation for understanding data.
  static ResampleConfig understanding() { return {}; }

  /// Pre-training curation for generation data.
  static ResampleConfig generation() {
    ResampleConfig c;
    c.per_category = {{Category::speech, {0.1, 0.28}}, {Category::music, {0.1, 0.20}}, {Category::sfx, {0.1, 0.20}}};
    return c;
  }

  /// Low-temperature subset for SFT generation data. The subset is sized by
  /// an absolute sample count (1M at full scale) rather than a fraction.
  static ResampleConfig sft_generation() {
    ResampleConfig c;
    c.per_category = {{Category::speech, {0.03, 0.0}}, {Category::music, {0.03, 0.0}}, {Category::sfx, {0.03, 0.0}}};
    return c;
  }

  const CategoryResample& for_category(Category c) const {
    auto it = per_category.find(c);
    if (it == per_category.end()) throw std::invalid_argument("no resample config for category " + std::string(to_string(c)));
    return it->second;
  }
};

inline constexpr std::size_t kDefaultSftGenerationSamples = 1'000'000;

/// k = ceil((1 - discard) * n), clamped to [1, n] for n >= 1.
inline std::size_t keep_count(std::size_t n, double discard_fraction, bool* clamped = nullptr) {
  if (!(discard_fraction >= 0.0 && discard_fraction < 1.0))
    throw std::invalid_argument("discard_fraction must be in [0, 1)");
  if (clamped) *clamped = false;
  if (n == 0) return 0;
  const double raw = std::ceil((1.0 - discard_fraction) * static_cast<double>(n) - 1e-9);
  if (raw < 1.0) {
    if (clamped) *clamped = true;
    return 1;
  }
  return std::min(n, static_cast<std::size_t>(raw));
}

/// Standard Gumbel noise for one record; u is clamped to [2^-53, 1 - 2^-53].
inline double gumbel_noise(std::uint64_t seed, std::string_view record_id) {
  auto rng = SeedContext{seed, std::string(record_id)}.engine("gumbel");
  constexpr double eps = 0x1.0p-53;
  const double u = std::clamp(unit_uniform(rng), eps, 1.0 - eps);
  return -std::log(-std::log(u));
}

struct SelectionResult {
  std::vector<std::size_t> selected;  // indices into the input, ascending
  std::size_t k = 0;
  bool clamped = false;
};

/// Keeps exactly min(k, n) items. temperature == 0 is deterministic top-k
/// by score; ties (in score or perturbed score) go to the smaller record_id.
inline std::vector<std::size_t> gumbel_select(std::span<const double> scores, std::span<const std::string> record_ids,
                                              double temperature, std::size_t k, std::uint64_t seed) {
  if (scores.size() != record_ids.size()) throw std::invalid_argument("gumbel_topk: scores/ids length mismatch");
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) throw std::invalid_argument("gumbel_topk: temperature must be >= 0");
  for (double s : scores)
    if (!std::isfinite(s)) throw std::invalid_argument("gumbel_topk: non-finite score");

  const std::size_t n = scores.size();
  k = std::min(k, n);
  if (k == 0) return {};

  std::vector<double> key(n);
  for (std::size_t i = 0; i < n; ++i)
    key[i] = temperature == 0.0 ? scores[i] : scores[i] / temperature + gumbel_noise(seed, record_ids[i]);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto better = [&](std::size_t a, std::size_t b) {
    if (key[a] != key[b]) return key[a] > key[b];
    return record_ids[a] < record_ids[b];
  };
  std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k - 1), order.end(), better);
  std::vector<std::size_t> selected(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(selected.begin(), selected.end());
  return selected;
}

/// Keeps k = ceil((1 - discard_fraction) * n) items.
inline SelectionResult gumbel_topk(std::span<const double> scores, std::span<const std::string> record_ids,
                                   double temperature, double discard_fraction, std::uint64_t seed) {
  SelectionResult out;
  out.k = keep_count(scores.size(), discard_fraction, &out.clamped);
  out.selected = gumbel_select(scores, record_ids, temperature, out.k, seed);
  return out;
}

inline SelectionResult gumbel_topk(std::span<const double> scores, std::span<const std::string> record_ids,
                                   const CategoryResample& cfg, std::uint64_t seed) {
  return gumbel_topk(scores, record_ids, cfg.temperature, cfg.discard_fraction, seed);
}

}  // namespace capcurate
