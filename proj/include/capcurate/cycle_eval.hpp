#pragma once

// Cycle-consistency probing: Audio -> Caption -> Audio and
// Caption -> Audio -> Caption loops over captioner, generator and embedder
// endpoints, scored by embedding cosine similarity.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "judge.hpp"
#include "parallel.hpp"

namespace capcurate {

class UndefinedSimilarity : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

inline double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw std::invalid_argument("cosine: length mismatch");
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (!(nu > 0.0) || !(nv > 0.0)) throw UndefinedSimilarity("cosine of a zero-norm vector is undefined");
  if (!std::isfinite(dot) || !std::isfinite(nu) || !std::isfinite(nv)) throw UndefinedSimilarity("cosine: non-finite input");
  // For u == v this is exactly 1: dot == nu and sqrt(nu * nu) == nu.
  return std::clamp(dot / std::sqrt(nu * nv), -1.0, 1.0);
}

enum class CycleDirection { a2t2a, t2a2t };

inline std::string_view to_string(CycleDirection d) { return d == CycleDirection::a2t2a ? "a2t2a" : "t2a2t"; }

struct CycleItem {
  std::string id;
  std::string content;  // audio reference for a2t2a, caption for t2a2t
};

struct CycleItemResult {
  std::string id;
  std::optional<double> similarity;
  std::string error;
};

struct CycleResult {
  CycleDirection direction = CycleDirection::a2t2a;
  std::vector<CycleItemResult> items;
  std::size_t completed = 0;
  std::size_t failures = 0;
  std::optional<double> mean;  // over completed loops only
};

struct CycleEndpoints {
  JudgeClient& captioner;
  JudgeClient& generator;
  JudgeClient& embedder;
};

namespace detail {

inline CallResult<std::string> cycle_caption(JudgeClient& c, const std::string& id, const std::string& audio) {
  Json p = Json::object();
  p["audio"] = audio;
  return c.call(id, "caption", std::move(p), [](const Json& r) { return schema::nonempty_string(r, "caption"); });
}

inline CallResult<std::string> cycle_generate(JudgeClient& c, const std::string& id, const std::string& caption) {
  Json p = Json::object();
  p["caption"] = caption;
  return c.call(id, "generate", std::move(p), [](const Json& r) { return schema::nonempty_string(r, "audio"); });
}

inline CallResult<std::vector<double>> cycle_embed(JudgeClient& c, const std::string& id, const std::string& content,
                                                   std::string_view modality) {
  Json p = Json::object();
  p["content"] = content;
  p["modality"] = std::string(modality);
  return c.call(id, "embed", std::move(p), [](const Json& r) {
    const Json& v = r.at("vector");
    if (!v.is_array() || v.empty()) throw SchemaError("vector must be a nonempty array");
    std::vector<double> out;
    for (const auto& x : v) {
      if (!x.is_number()) throw SchemaError("vector entries must be numbers");
      out.push_back(x.get<double>());
    }
    return out;
  });
}

}  // namespace detail

inline CycleItemResult run_cycle_item(const CycleItem& item, CycleDirection dir, const CycleEndpoints& ep) {
  CycleItemResult res{item.id, std::nullopt, {}};
  auto fail = [&](const std::string& step, const std::string& err) {
    res.error = step + ": " + err;
    return res;
  };

  std::string first, second;
  std::string_view modality;
  if (dir == CycleDirection::a2t2a) {
    auto cap = detail::cycle_caption(ep.captioner, item.id, item.content);
    if (!cap.ok()) return fail("caption", cap.error);
    auto gen = detail::cycle_generate(ep.generator, item.id, *cap.value);
    if (!gen.ok()) return fail("generate", gen.error);
    first = item.content;
    second = *gen.value;
    modality = "audio";
  } else {
    auto gen = detail::cycle_generate(ep.generator, item.id, item.content);
    if (!gen.ok()) return fail("generate", gen.error);
    auto cap = detail::cycle_caption(ep.captioner, item.id, *gen.value);
    if (!cap.ok()) return fail("caption", cap.error);
    first = item.content;
    second = *cap.value;
    modality = "text";
  }

  auto e1 = detail::cycle_embed(ep.embedder, item.id, first, modality);
  if (!e1.ok()) return fail("embed", e1.error);
  auto e2 = detail::cycle_embed(ep.embedder, item.id, second, modality);
  if (!e2.ok()) return fail("embed", e2.error);
  try {
    res.similarity = cosine(*e1.value, *e2.value);
  } catch (const std::exception& e) {
    return fail("cosine", e.what());
  }
  return res;
}

inline CycleResult run_cycle(const std::vector<CycleItem>& items, CycleDirection dir, const CycleEndpoints& ep,
                             std::size_t workers = 1) {
  CycleResult out;
  out.direction = dir;
  out.items.resize(items.size());
  parallel_for(items.size(), workers, [&](std::size_t i) { out.items[i] = run_cycle_item(items[i], dir, ep); });

  double sum = 0.0;
  for (const auto& r : out.items) {
    if (r.similarity) {
      ++out.completed;
      sum += *r.similarity;
    } else {
      ++out.failures;
    }
  }
  if (out.completed > 0) out.mean = sum / static_cast<double>(out.completed);
  return out;
}

inline std::string format_cycle_table(const std::vector<CycleResult>& results) {
  std::string out = "direction   n        mean_similarity   failures\n";
  char line[128];
  for (const auto& r : results) {
    const std::string mean = r.mean ? [&] {
      char b[32];
      std::snprintf(b, sizeof b, "%.4f", *r.mean);
      return std::string(b);
    }()
                                    : std::string("n/a");
    std::snprintf(line, sizeof line, "%-10s  %-7zu  %-16s  %zu\n", std::string(to_string(r.direction)).c_str(), r.completed,
                  mean.c_str(), r.failures);
    out += line;
  }
  return out;
}

inline Json cycle_to_json(const CycleResult& r) {
  Json j = Json::object();
  j["direction"] = std::string(to_string(r.direction));
  j["n"] = r.completed;
  j["failures"] = r.failures;
  j["mean_similarity"] = r.mean ? Json(*r.mean) : Json(nullptr);
  Json items = Json::array();
  for (const auto& it : r.items) {
    Json o = Json::object();
    o["id"] = it.id;
    o["similarity"] = it.similarity ? Json(*it.similarity) : Json(nullptr);
    if (!it.error.empty()) o["error"] = it.error;
    items.push_back(std::move(o));
  }
  j["items"] = std::move(items);
  return j;
}

}  // namespace capcurate
