#pragma once

// Within-category percentile ranks on each quality dimension, averaged into
// one fused score per record.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "core.hpp"
#include "manifest.hpp"

namespace capcurate {

/// Midrank percentiles: pct_i = (midrank_i - 0.5) / n, with tied values
/// sharing the average of their ranks. Non-finite inputs are left out of the
/// ranking and come back as NaN.
inline std::vector<double> percentile_ranks(std::span<const double> values) {
  std::vector<double> out(values.size(), std::numeric_limits<double>::quiet_NaN());
  std::vector<std::size_t> order;
  order.reserve(values.size());
  for (std::size_t i = 0; i < values.size(); ++i)
    if (std::isfinite(values[i])) order.push_back(i);
  if (order.empty()) return out;

  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  const double n = static_cast<double>(order.size());
  std::size_t lo = 0;
  while (lo < order.size()) {
    std::size_t hi = lo;
    while (hi + 1 < order.size() && values[order[hi + 1]] == values[order[lo]]) ++hi;
    // 0-based positions lo..hi: midrank - 0.5 = (lo + hi) / 2 + 0.5
    const double pct = (0.5 * static_cast<double>(lo + hi) + 0.5) / n;
    for (std::size_t k = lo; k <= hi; ++k) out[order[k]] = pct;
    lo = hi + 1;
  }
  return out;
}

struct FusionWeights {
  double audio_only = 1.0;
  double text_only = 1.0;
  double alignment = 1.0;
};

struct FuseReport {
  std::map<std::string, std::size_t> per_category;
  std::size_t missing_dimension = 0;
  std::size_t unscored = 0;
  std::size_t non_finite = 0;
  std::vector<std::string> warnings;
};

/// Completes the QualityVector of every record in place. Records are ranked
/// only against records of the same category; a dimension missing on a
/// record is left out of that record's mean and flagged.
inline FuseReport fuse(std::vector<CurationRecord>& records, const FusionWeights& weights = {}) {
  FuseReport report;
  struct Dim {
    const char* name;
    std::optional<double> QualityVector::*raw;
    std::optional<double> QualityVector::*pct;
    double weight;
  };
  const std::array<Dim, 3> dims{{
      {"audio_only", &QualityVector::audio_only, &QualityVector::pct_audio, weights.audio_only},
      {"text_only", &QualityVector::text_only, &QualityVector::pct_text, weights.text_only},
      {"alignment", &QualityVector::alignment, &QualityVector::pct_align, weights.alignment},
  }};

  for (Category cat : kAudioCategories) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < records.size(); ++i)
      if (records[i].category == cat) members.push_back(i);
    report.per_category[std::string(to_string(cat))] = members.size();
    if (members.empty()) {
      report.warnings.push_back("empty category group: " + std::string(to_string(cat)));
      continue;
    }

    for (const auto& d : dims) {
      std::vector<double> vals(members.size(), std::numeric_limits<double>::quiet_NaN());
      for (std::size_t k = 0; k < members.size(); ++k) {
        auto& q = records[members[k]].quality_mut();
        q.*d.pct = std::nullopt;
        if (const auto& v = q.*d.raw) {
          if (std::isfinite(*v)) {
            vals[k] = *v;
          } else {
            records[members[k]].add_flag(std::string("non-finite:") + d.name);
            ++report.non_finite;
          }
        }
      }
      const auto pct = percentile_ranks(vals);
      for (std::size_t k = 0; k < members.size(); ++k)
        if (!std::isnan(pct[k])) records[members[k]].quality_mut().*d.pct = pct[k];
    }

    for (std::size_t idx : members) {
      auto& rec = records[idx];
      auto& q = rec.quality_mut();
      double num = 0.0, den = 0.0;
      bool missing = false;
      for (const auto& d : dims) {
        if (const auto& p = q.*d.pct) {
          num += d.weight * *p;
          den += d.weight;
        } else {
          rec.add_flag(std::string("missing-dimension:") + d.name);
          missing = true;
        }
      }
      if (missing) ++report.missing_dimension;
      if (den > 0.0) {
        q.fused = num / den;
      } else {
        q.fused = std::nullopt;
        rec.add_flag("unscored");
        ++report.unscored;
      }
    }
  }
  return report;
}

/// Reads a scores sidecar (one {"record_id", "audio_only"?, "alignment"?,
/// "text_only"?} object per line) and merges its raw scores into records.
/// Returns the number of records updated.
inline std::size_t ingest_scores(std::vector<CurationRecord>& records, const std::filesystem::path& sidecar) {
  std::ifstream in(sidecar);
  if (!in) throw ManifestError("cannot open scores sidecar: " + sidecar.string());
  std::unordered_map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < records.size(); ++i) by_id.emplace(records[i].record_id, i);

  std::size_t updated = 0, line_no = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      throw ManifestError("scores sidecar line " + std::to_string(line_no) + ": invalid JSON");
    }
    auto it = by_id.find(j.value("record_id", std::string{}));
    if (it == by_id.end()) continue;
    auto& q = records[it->second].quality_mut();
    for (auto [key, field] : {std::pair{"audio_only", &QualityVector::audio_only},
                              std::pair{"alignment", &QualityVector::alignment},
                              std::pair{"text_only", &QualityVector::text_only}}) {
      if (auto v = j.find(key); v != j.end() && v->is_number()) q.*field = v->get<double>();
    }
    ++updated;
  }
  return updated;
}

}  // namespace capcurate
