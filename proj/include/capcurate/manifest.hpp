#pragma once

// Line-delimited JSON manifests. One object per line; required keys
// record_id, audio_ref, duration_s, caption. Everything else round-trips.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "core.hpp"

namespace capcurate {

class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LineError {
  std::size_t line = 0;
  std::string message;
};

namespace detail {

inline void set_number(Json& obj, const char* key, double value) {
  auto it = obj.find(key);
  if (it != obj.end() && it->is_number() && it->get<double>() == value) return;
  obj[key] = value;
}

inline Json quality_to_json(const QualityVector& q, Json base) {
  if (!base.is_object()) base = Json::object();
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (v) {
      set_number(base, key, *v);
    } else {
      base.erase(key);
    }
  };
  put("audio_only", q.audio_only);
  put("text_only", q.text_only);
  put("alignment", q.alignment);
  put("pct_audio", q.pct_audio);
  put("pct_text", q.pct_text);
  put("pct_align", q.pct_align);
  put("fused", q.fused);
  return base;
}

inline std::optional<double> opt_number(const Json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_number()) throw ManifestError(std::string("scores.") + key + " must be a number");
  return it->get<double>();
}

inline TextJudgeScores judge_from_json(const Json& j) {
  TextJudgeScores s;
  auto cat = parse_category(j.at("audio_type").get<std::string>());
  if (!cat) throw ManifestError("text_judge.audio_type invalid");
  s.audio_type = *cat;
  s.is_english = j.at("is_english").get<bool>();
  s.is_audio_centric = j.at("is_audio_centric").get<bool>();
  s.intelligibility = j.at("intelligibility").get<int>();
  s.complexity = j.at("complexity").get<int>();
  s.diversity = j.at("diversity").get<int>();
  return s;
}

inline Json judge_to_json(const TextJudgeScores& s) {
  Json j = Json::object();
  j["audio_type"] = std::string(to_string(s.audio_type));
  j["is_english"] = s.is_english;
  j["is_audio_centric"] = s.is_audio_centric;
  j["intelligibility"] = s.intelligibility;
  j["complexity"] = s.complexity;
  j["diversity"] = s.diversity;
  return j;
}

}  // namespace detail

/// Parses one manifest line. Throws ManifestError on schema violations.
inline CurationRecord parse_record(std::string_view line) {
  Json j;
  try {
    j = Json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ManifestError(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ManifestError("record is not a JSON object");

  auto require_string = [&](const char* key) -> std::string {
    auto it = j.find(key);
    if (it == j.end()) throw ManifestError(std::string("missing required key '") + key + "'");
    if (!it->is_string()) throw ManifestError(std::string("key '") + key + "' must be a string");
    return it->get<std::string>();
  };

  CurationRecord r;
  r.record_id = require_string("record_id");
  if (r.record_id.empty()) throw ManifestError("record_id must be non-empty");
  r.audio_ref = require_string("audio_ref");
  r.caption = require_string("caption");

  auto dur = j.find("duration_s");
  if (dur == j.end()) throw ManifestError("missing required key 'duration_s'");
  if (!dur->is_number()) throw ManifestError("key 'duration_s' must be a number");
  r.duration_s = dur->get<double>();
  if (!(r.duration_s >= 0.0) || !std::isfinite(r.duration_s))
    throw ManifestError("duration_s must be a finite number >= 0");

  try {
    if (auto it = j.find("category"); it != j.end()) {
      auto c = parse_category(it->get<std::string>());
      if (!c) throw ManifestError("unknown category '" + it->get<std::string>() + "'");
      r.category = *c;
    }
    if (auto it = j.find("incomplete_flag"); it != j.end()) r.incomplete_flag = it->get<bool>();
    if (auto it = j.find("scores"); it != j.end()) {
      if (!it->is_object()) throw ManifestError("scores must be an object");
      QualityVector q;
      q.audio_only = detail::opt_number(*it, "audio_only");
      q.text_only = detail::opt_number(*it, "text_only");
      q.alignment = detail::opt_number(*it, "alignment");
      q.pct_audio = detail::opt_number(*it, "pct_audio");
      q.pct_text = detail::opt_number(*it, "pct_text");
      q.pct_align = detail::opt_number(*it, "pct_align");
      q.fused = detail::opt_number(*it, "fused");
      r.quality = q;
    }
    if (auto it = j.find("text_judge"); it != j.end()) r.text_judge = detail::judge_from_json(*it);
    if (auto it = j.find("short_caption"); it != j.end()) r.short_caption = it->get<std::string>();
    if (auto it = j.find("flags"); it != j.end()) r.flags = it->get<std::vector<std::string>>();
    if (auto it = j.find("verdicts"); it != j.end()) {
      if (!it->is_array()) throw ManifestError("verdicts must be an array");
      for (const auto& v : *it)
        r.verdicts.push_back({v.at("stage").get<std::string>(), v.at("pass").get<bool>(),
                              v.value("reason", std::string{})});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError(std::string("schema violation: ") + e.what());
  }

  r.raw = std::move(j);
  return r;
}

/// Serializes a record on top of its source object so unknown keys and
/// key order survive untouched.
inline Json record_to_json(const CurationRecord& r) {
  Json j = r.raw.is_object() ? r.raw : Json::object();
  j["record_id"] = r.record_id;
  j["audio_ref"] = r.audio_ref;
  detail::set_number(j, "duration_s", r.duration_s);
  j["caption"] = r.caption;
  if (r.category != Category::unknown || j.contains("category")) j["category"] = std::string(to_string(r.category));
  if (r.incomplete_flag || j.contains("incomplete_flag")) j["incomplete_flag"] = r.incomplete_flag;
  if (r.quality) {
    j["scores"] = detail::quality_to_json(*r.quality, j.value("scores", Json::object()));
  } else {
    j.erase("scores");
  }
  if (r.text_judge) j["text_judge"] = detail::judge_to_json(*r.text_judge);
  if (r.short_caption) j["short_caption"] = *r.short_caption;
  if (!r.flags.empty() || j.contains("flags")) j["flags"] = r.flags;
  if (!r.verdicts.empty() || j.contains("verdicts")) {
    Json arr = Json::array();
    for (const auto& v : r.verdicts) {
      Json o = Json::object();
      o["stage"] = v.stage;
      o["pass"] = v.pass;
      o["reason"] = v.reason;
      arr.push_back(std::move(o));
    }
    j["verdicts"] = std::move(arr);
  }
  return j;
}

inline std::string record_to_line(const CurationRecord& r) { return record_to_json(r).dump(); }

/// Streaming reader. Malformed lines are collected with their 1-based line
/// number and skipped; blank lines are ignored.
class ManifestReader {
 public:
  explicit ManifestReader(std::istream& in) : in_(&in) {}

  explicit ManifestReader(const std::filesystem::path& path) : file_(path) {
    if (!file_) throw ManifestError("cannot open manifest: " + path.string());
    in_ = &file_;
  }

  std::optional<CurationRecord> next() {
    std::string line;
    while (std::getline(*in_, line)) {
      ++line_no_;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      ++lines_seen_;
      try {
        auto rec = parse_record(line);
        if (!ids_.insert(rec.record_id).second) throw ManifestError("duplicate record_id '" + rec.record_id + "'");
        return rec;
      } catch (const ManifestError& e) {
        errors_.push_back({line_no_, e.what()});
      }
    }
    return std::nullopt;
  }

  const std::vector<LineError>& errors() const { return errors_; }
  std::size_t lines_seen() const { return lines_seen_; }

 private:
  std::ifstream file_;
  std::istream* in_ = nullptr;
  std::size_t line_no_ = 0;
  std::size_t lines_seen_ = 0;
  std::unordered_set<std::string> ids_;
  std::vector<LineError> errors_;
};

struct ManifestReadResult {
  std::vector<CurationRecord> records;
  std::vector<LineError> errors;
};

namespace detail {
inline ManifestReadResult drain(ManifestReader& reader, double max_error_rate) {
  ManifestReadResult out;
  while (auto r = reader.next()) out.records.push_back(std::move(*r));
  out.errors = reader.errors();
  if (reader.lines_seen() > 0) {
    const double rate = static_cast<double>(out.errors.size()) / static_cast<double>(reader.lines_seen());
    if (rate > max_error_rate) {
      std::ostringstream msg;
      msg << out.errors.size() << " malformed line(s) of " << reader.lines_seen() << " exceeds error threshold "
          << max_error_rate << "; first at line " << out.errors.front().line << ": " << out.errors.front().message;
      throw ManifestError(msg.str());
    }
  }
  return out;
}
}  // namespace detail

inline ManifestReadResult read_manifest(std::istream& in, double max_error_rate = 1.0) {
  ManifestReader reader(in);
  return detail::drain(reader, max_error_rate);
}

inline ManifestReadResult read_manifest(const std::filesystem::path& path, double max_error_rate = 1.0) {
  ManifestReader reader(path);
  return detail::drain(reader, max_error_rate);
}

inline void write_manifest(std::ostream& out, const std::vector<CurationRecord>& records) {
  for (const auto& r : records) out << record_to_line(r) << '\n';
}

inline void write_manifest(const std::filesystem::path& path, const std::vector<CurationRecord>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ManifestError("cannot write manifest: " + path.string());
  write_manifest(out, records);
}

}  // namespace capcurate
