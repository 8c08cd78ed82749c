#pragma once

// Every external model call goes through JudgeClient. A Transport moves one
// request object to a model endpoint and returns its reply object; the client
// validates the envelope and payload, retries, and bounds in-flight calls.
//
// Wire format (one JSON object per line):
//   request: {"record_id": ..., "task": ..., "payload": {...}}
//   reply:   {"record_id": ..., "result": {...}}   or {"record_id": ..., "error": "..."}

#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstring>
#include <istream>
#include <memory>
#include <mutex>
#include <ostream>
#include <random>
#include <semaphore>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "core.hpp"
#include "text_rules.hpp"

namespace capcurate {

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A reply that arrived but does not satisfy the task schema.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual Json call(const Json& request, double timeout_s) = 0;
};

// ---------------------------------------------------------------------------
// Deterministic mock

namespace mock {

inline std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

inline std::size_t count_hits(const std::string& text, std::initializer_list<std::string_view> words) {
  std::size_t hits = 0;
  for (auto w : words) {
    for (auto pos = text.find(w); pos != std::string::npos; pos = text.find(w, pos + 1)) ++hits;
  }
  return hits;
}

/// Keyword-table taxonomy guess; falls back to a hash pick when no keyword
/// matches.
inline Category keyword_category(std::string_view caption) {
  const std::string t = lowercase(caption);
  const std::size_t speech = count_hits(t, {"spoken", "speech", "speaker", "speaks", "voice", "narrat", "talk",
                                            "conversation", "dialogue", "lecture", "whisper", "interview"});
  const std::size_t music = count_hits(t, {"music", "guitar", "riff", "melody", "song", "piano", "drum", "chord",
                                           "tempo", "orchestra", "synth", "bassline", "violin"});
  const std::size_t sfx = count_hits(t, {"sound effect", "engine", "bird", "rain", "footstep", "door", "dog",
                                         "siren", "ambient", "thunder", "explosion", "wind", "traffic", "applause"});
  if (speech == 0 && music == 0 && sfx == 0) return kAudioCategories[hash64(caption, 0xCA7) % 3];
  if (speech >= music && speech >= sfx) return Category::speech;
  if (music >= sfx) return Category::music;
  return Category::sfx;
}

inline int hash_score(std::string_view text, std::uint64_t salt) { return 1 + static_cast<int>(hash64(text, salt) % 5); }

/// Unit vector derived from a hash of the content.
inline std::vector<double> hash_embedding(std::string_view content, std::size_t dim = 16) {
  std::mt19937_64 g(hash64(content, 0xE3B));
  std::vector<double> v(dim);
  double norm2 = 0.0;
  for (auto& x : v) {
    x = unit_uniform(g) * 2.0 - 1.0;
    norm2 += x * x;
  }
  const double norm = std::sqrt(norm2);
  for (auto& x : v) x /= norm;
  return v;
}

}  // namespace mock

/// Keyword-table + seeded-hash stand-in for every model endpoint. The same
/// request always produces the same reply.
class MockTransport : public Transport {
 public:
  Json call(const Json& request, double /*timeout_s*/) override {
    const std::string task = request.at("task").get<std::string>();
    const Json& p = request.at("payload");
    Json result = Json::object();

    if (task == "classify") {
      result["category"] = std::string(to_string(mock::keyword_category(p.at("caption").get<std::string>())));
    } else if (task == "score_text") {
      const auto caption = p.at("caption").get<std::string>();
      result["audio_type"] = std::string(to_string(mock::keyword_category(caption)));
      result["is_english"] = !has_non_latin(caption) && caption.find("[non-english]") == std::string::npos;
      result["is_audio_centric"] = caption.find("[off-topic]") == std::string::npos;
      result["intelligibility"] = mock::hash_score(caption, 1);
      result["complexity"] = mock::hash_score(caption, 2);
      result["diversity"] = mock::hash_score(caption, 3);
    } else if (task == "summarize") {
      result["summary"] = first_words(p.at("caption").get<std::string>(), p.at("max_tokens").get<std::size_t>());
    } else if (task == "sft_understanding") {
      const auto caption = p.at("caption").get<std::string>();
      std::string tags, names;
      for (const auto& a : p.at("attributes")) {
        tags += "[attr:" + a.get<std::string>() + "] ";
        names += (names.empty() ? "" : " and ") + a.get<std::string>();
      }
      result["request"] = tags + "What can you tell me about the " + names + " in this recording?";
      result["answer"] = "Regarding " + names + ": " + first_words(caption, 12) + ".";
      result["cot"] = "The caption describes: " + first_words(caption, 20) + ". The question asks about " +
                      names + ", so the answer follows from those details.";
    } else if (task == "sft_generation") {
      const auto caption = p.at("caption").get<std::string>();
      const auto persona = p.at("persona").get<std::string>();
      const auto style = p.at("style").get<std::string>();
      std::string body = style == "imaginary" ? "Create audio that feels like this scene: " + first_words(caption, 8)
                                              : "Generate audio containing: " + first_words(caption, 16);
      result["request"] = "[persona:" + persona + "] " + body;
      result["cot"] = "Plan: the listener wants " + first_words(caption, 10) + "; lay out the events, then write the caption.";
      result["style"] = style;
    } else if (task == "sft_judge") {
      const std::string key = p.dump();
      result["request_diversity"] = mock::hash_score(key, 11);
      result["request_response_alignment"] = mock::hash_score(key, 12);
      result["thinking_coherence"] = mock::hash_score(key, 13);
      result["caption_quality"] = mock::hash_score(key, 14);
      result["training_value"] = mock::hash_score(key, 15);
    } else if (task == "caption") {
      result["caption"] = p.at("audio").get<std::string>();
    } else if (task == "generate") {
      result["audio"] = p.at("caption").get<std::string>();
    } else if (task == "embed") {
      result["vector"] = mock::hash_embedding(p.at("content").get<std::string>());
    } else {
      Json reply = Json::object();
      reply["record_id"] = request.at("record_id");
      reply["error"] = "unknown task '" + task + "'";
      return reply;
    }

    Json reply = Json::object();
    reply["record_id"] = request.at("record_id");
    reply["result"] = std::move(result);
    return reply;
  }
};

/// Serves line-delimited requests from `in` through `transport`, writing
/// replies to `out`. Used by the mock-server subcommand.
inline void serve_lines(Transport& transport, std::istream& in, std::ostream& out) {
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Json reply;
    try {
      reply = transport.call(Json::parse(line), 0.0);
    } catch (const std::exception& e) {
      reply = Json::object();
      reply["record_id"] = nullptr;
      reply["error"] = e.what();
    }
    out << reply.dump() << '\n' << std::flush;
  }
}

// ---------------------------------------------------------------------------
// Subprocess transport

/// Runs `sh -c command` with a socketpair on its stdin/stdout and exchanges
/// one JSON line per call. The child is restarted after a timeout or a
/// broken stream.
class PipeTransport : public Transport {
 public:
  explicit PipeTransport(std::string command) : command_(std::move(command)) {}
  ~PipeTransport() override { stop(); }

  PipeTransport(const PipeTransport&) = delete;
  PipeTransport& operator=(const PipeTransport&) = delete;

  Json call(const Json& request, double timeout_s) override {
    std::lock_guard lock(mu_);
    if (fd_ < 0) start();
    const std::string line = request.dump() + "\n";
    std::size_t sent = 0;
    while (sent < line.size()) {
      const ssize_t n = ::send(fd_, line.data() + sent, line.size() - sent, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        stop();
        throw TransportError(std::string("send failed: ") + std::strerror(errno));
      }
      sent += static_cast<std::size_t>(n);
    }

    const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_s);
    for (;;) {
      if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
        std::string reply = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        try {
          return Json::parse(reply);
        } catch (const nlohmann::json::parse_error&) {
          throw SchemaError("reply is not valid JSON");
        }
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (timeout_s > 0 && left.count() <= 0) {
        stop();
        throw TransportError("timed out waiting for reply");
      }
      pollfd pfd{fd_, POLLIN, 0};
      const int rc = ::poll(&pfd, 1, timeout_s > 0 ? static_cast<int>(left.count()) : -1);
      if (rc < 0 && errno == EINTR) continue;
      if (rc <= 0) continue;
      char chunk[4096];
      const ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
      if (n <= 0) {
        stop();
        throw TransportError("endpoint closed the connection");
      }
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  void start() {
    int sv[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM, 0, sv) != 0) throw TransportError("socketpair failed");
    const pid_t pid = ::fork();
    if (pid < 0) {
      ::close(sv[0]);
      ::close(sv[1]);
      throw TransportError("fork failed");
    }
    if (pid == 0) {
      ::close(sv[0]);
      ::dup2(sv[1], STDIN_FILENO);
      ::dup2(sv[1], STDOUT_FILENO);
      ::close(sv[1]);
      ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(sv[1]);
    fd_ = sv[0];
    pid_ = pid;
    buffer_.clear();
  }

  void stop() {
    if (fd_ >= 0) {
      ::close(fd_);
      fd_ = -1;
    }
    if (pid_ > 0) {
      ::kill(pid_, SIGTERM);
      ::waitpid(pid_, nullptr, 0);
      pid_ = -1;
    }
  }

  std::string command_;
  std::mutex mu_;
  int fd_ = -1;
  pid_t pid_ = -1;
  std::string buffer_;
};

/// "mock" selects the in-process mock; "cmd:<shell command>" a subprocess.
inline std::shared_ptr<Transport> make_transport(std::string_view endpoint) {
  if (endpoint.empty() || endpoint == "mock") return std::make_shared<MockTransport>();
  if (endpoint.rfind("cmd:", 0) == 0) return std::make_shared<PipeTransport>(std::string(endpoint.substr(4)));
  throw std::invalid_argument("unknown endpoint '" + std::string(endpoint) + "' (expected mock or cmd:<command>)");
}

// ---------------------------------------------------------------------------
// Client

struct ClientOptions {
  double timeout_s = 30.0;
  int max_retries = 2;
  int max_in_flight = 8;
};

template <class T>
struct CallResult {
  std::optional<T> value;
  int attempts = 0;
  bool transport_failure = false;
  std::string error;

  bool ok() const { return value.has_value(); }
};

class JudgeClient {
 public:
  explicit JudgeClient(std::shared_ptr<Transport> transport, ClientOptions opts = {})
      : transport_(std::move(transport)), opts_(opts), slots_(std::max(1, opts.max_in_flight)) {
    if (!transport_) throw std::invalid_argument("JudgeClient: null transport");
    if (opts_.max_retries < 0) throw std::invalid_argument("JudgeClient: max_retries must be >= 0");
  }

  JudgeClient(const JudgeClient&) = delete;
  JudgeClient& operator=(const JudgeClient&) = delete;

  const ClientOptions& options() const { return opts_; }

  /// Sends one request, validates the envelope, and runs `parse` on the
  /// result object. `parse` throws SchemaError (or a json exception) to
  /// reject a reply. At most 1 + max_retries attempts are made.
  template <class Parse>
  auto call(std::string_view record_id, std::string_view task, Json payload, Parse&& parse)
      -> CallResult<std::invoke_result_t<Parse&, const Json&>> {
    using T = std::invoke_result_t<Parse&, const Json&>;
    Json request = Json::object();
    request["record_id"] = std::string(record_id);
    request["task"] = std::string(task);
    request["payload"] = std::move(payload);

    CallResult<T> out;
    slots_.acquire();
    struct Release {
      std::counting_semaphore<>& s;
      ~Release() { s.release(); }
    } release{slots_};

    for (int attempt = 0; attempt <= opts_.max_retries; ++attempt) {
      ++out.attempts;
      try {
        Json reply = transport_->call(request, opts_.timeout_s);
        if (!reply.is_object()) throw SchemaError("reply is not an object");
        if (reply.value("record_id", Json()) != request["record_id"]) throw SchemaError("reply record_id mismatch");
        if (auto err = reply.find("error"); err != reply.end()) throw TransportError("endpoint error: " + err->dump());
        auto res = reply.find("result");
        if (res == reply.end() || !res->is_object()) throw SchemaError("reply has no result object");
        out.value.emplace(parse(*res));
        out.error.clear();
        out.transport_failure = false;
        return out;
      } catch (const TransportError& e) {
        out.transport_failure = true;
        out.error = e.what();
      } catch (const SchemaError& e) {
        out.transport_failure = false;
        out.error = std::string("schema: ") + e.what();
      } catch (const nlohmann::json::exception& e) {
        out.transport_failure = false;
        out.error = std::string("schema: ") + e.what();
      }
    }
    return out;
  }

 private:
  std::shared_ptr<Transport> transport_;
  ClientOptions opts_;
  std::counting_semaphore<> slots_;
};

// ---------------------------------------------------------------------------
// Reply schemas

namespace schema {

inline int score_1_to_5(const Json& obj, const char* key) {
  const Json& v = obj.at(key);
  if (!v.is_number_integer()) throw SchemaError(std::string(key) + " must be an integer");
  const int s = v.get<int>();
  if (s < 1 || s > 5) throw SchemaError(std::string(key) + " out of range 1-5: " + std::to_string(s));
  return s;
}

inline std::string nonempty_string(const Json& obj, const char* key) {
  const Json& v = obj.at(key);
  if (!v.is_string() || v.get_ref<const std::string&>().empty())
    throw SchemaError(std::string(key) + " must be a non-empty string");
  return v.get<std::string>();
}

/// Constrained-choice category reply.
inline Category audio_category(const Json& obj, const char* key) {
  std::string s = mock::lowercase(obj.at(key).get<std::string>());
  s.erase(0, s.find_first_not_of(" \t"));
  s.erase(s.find_last_not_of(" \t.") + 1);
  if (s == "speech") return Category::speech;
  if (s == "music") return Category::music;
  if (s == "sfx" || s == "sound effects" || s == "sound effect") return Category::sfx;
  throw SchemaError("category not one of speech/music/sfx: '" + s + "'");
}

inline TextJudgeScores text_judge(const Json& r) {
  TextJudgeScores s;
  s.audio_type = audio_category(r, "audio_type");
  if (!r.at("is_english").is_boolean() || !r.at("is_audio_centric").is_boolean())
    throw SchemaError("is_english/is_audio_centric must be booleans");
  s.is_english = r.at("is_english").get<bool>();
  s.is_audio_centric = r.at("is_audio_centric").get<bool>();
  s.intelligibility = score_1_to_5(r, "intelligibility");
  s.complexity = score_1_to_5(r, "complexity");
  s.diversity = score_1_to_5(r, "diversity");
  return s;
}

}  // namespace schema

// ---------------------------------------------------------------------------
// Curation calls

struct ClassifyOutcome {
  Category category = Category::unknown;
  bool failed = false;
  std::string error;
};

/// Taxonomy classification from the caption text. An unusable reply after
/// retries yields Category::unknown with failed set; the record is kept.
inline ClassifyOutcome classify_taxonomy(std::string_view caption, JudgeClient& client, std::string_view record_id = {}) {
  if (caption.empty()) return {Category::unknown, true, "empty caption"};
  Json payload = Json::object();
  payload["caption"] = std::string(caption);
  auto r = client.call(record_id, "classify", std::move(payload),
                       [](const Json& res) { return schema::audio_category(res, "category"); });
  if (!r.ok()) return {Category::unknown, true, r.error};
  return {*r.value, false, {}};
}

inline CallResult<TextJudgeScores> score_text(std::string_view caption, JudgeClient& client,
                                              std::string_view record_id = {}) {
  Json payload = Json::object();
  payload["caption"] = std::string(caption);
  return client.call(record_id, "score_text", std::move(payload), schema::text_judge);
}

struct SummaryOutcome {
  std::string summary;
  std::vector<std::string> flags;  // "summary-truncated" or "truncated-fallback"
};

inline constexpr std::size_t kAlignmentTokenCap = 77;

/// Short caption for the alignment scorer's limited text window. The reply
/// is hard-capped at max_tokens words; on failure the caption's first
/// max_tokens words are used instead.
inline SummaryOutcome summarize_for_alignment(std::string_view caption, JudgeClient& client,
                                              std::string_view record_id = {},
                                              std::size_t max_tokens = kAlignmentTokenCap) {
  Json payload = Json::object();
  payload["caption"] = std::string(caption);
  payload["max_tokens"] = max_tokens;
  auto r = client.call(record_id, "summarize", std::move(payload),
                       [](const Json& res) { return schema::nonempty_string(res, "summary"); });
  SummaryOutcome out;
  if (!r.ok()) {
    out.summary = first_words(caption, max_tokens);
    out.flags.push_back("truncated-fallback");
    return out;
  }
  if (split_whitespace(*r.value).size() > max_tokens) {
    out.summary = first_words(*r.value, max_tokens);
    out.flags.push_back("summary-truncated");
  } else {
    out.summary = std::move(*r.value);
  }
  return out;
}

}  // namespace capcurate
