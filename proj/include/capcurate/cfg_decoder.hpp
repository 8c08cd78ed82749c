#pragma once

// Classifier-free guidance and temperature/top-k sampling over table-driven
// logit sources.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "codec_layout.hpp"
#include "core.hpp"

namespace capcurate {

class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DecodeConfig {
  double guidance = 1.0;
  double temperature = 1.0;
  std::size_t top_k = 20;
  std::size_t max_steps = 2048;
  std::uint64_t seed = 0;

  static DecodeConfig audio() { return {3.0, 0.8, 20, 2048, 0}; }
  static DecodeConfig text() { return {1.0, 0.6, 20, 2048, 0}; }

  void validate() const {
    if (top_k < 1) throw std::invalid_argument("top_k must be >= 1");
    if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be > 0");
    if (max_steps < 1) throw std::invalid_argument("max_steps must be >= 1");
    if (!std::isfinite(guidance)) throw std::invalid_argument("guidance must be finite");
  }
};

/// out = uncond + gamma * (cond - uncond). gamma == 1 returns cond as is.
inline std::vector<double> combine_cfg(std::span<const double> cond, std::span<const double> uncond, double gamma) {
  if (cond.size() != uncond.size())
    throw std::invalid_argument("combine_cfg: length mismatch (" + std::to_string(cond.size()) + " vs " +
                                std::to_string(uncond.size()) + ")");
  for (std::size_t i = 0; i < cond.size(); ++i)
    if (!std::isfinite(cond[i]) || !std::isfinite(uncond[i])) throw std::invalid_argument("combine_cfg: non-finite logit");
  if (gamma == 1.0) return {cond.begin(), cond.end()};
  std::vector<double> out(cond.size());
  for (std::size_t i = 0; i < cond.size(); ++i) out[i] = uncond[i] + gamma * (cond[i] - uncond[i]);
  return out;
}

inline constexpr double kGreedyTemperature = 1e-6;

/// Indices of the k largest finite logits, largest first; ties keep the
/// smaller index first.
inline std::vector<std::size_t> topk_indices(std::span<const double> logits, std::size_t k) {
  std::vector<std::size_t> idx;
  idx.reserve(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (std::isnan(logits[i]) || logits[i] == std::numeric_limits<double>::infinity())
      throw DecodeError("logit " + std::to_string(i) + " is not a number or +inf");
    if (logits[i] != -std::numeric_limits<double>::infinity()) idx.push_back(i);
  }
  auto before = [&](std::size_t a, std::size_t b) { return logits[a] != logits[b] ? logits[a] > logits[b] : a < b; };
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), before);
  idx.resize(k);
  return idx;
}

/// Draws one token id from softmax(logit / temperature) restricted to the
/// top-k logits. Argmax when temperature < 1e-6 or k == 1.
inline std::size_t sample_topk(std::span<const double> logits, double temperature, std::size_t k, std::mt19937_64& rng) {
  if (k == 0) throw std::invalid_argument("sample_topk: k must be >= 1");
  if (k > logits.size())
    throw std::invalid_argument("sample_topk: k=" + std::to_string(k) + " exceeds vocabulary " + std::to_string(logits.size()));
  if (!(temperature > 0.0)) throw std::invalid_argument("sample_topk: temperature must be > 0");

  auto keep = topk_indices(logits, k);
  if (keep.empty()) throw DecodeError("all logits are -inf");
  if (temperature < kGreedyTemperature || keep.size() == 1) return keep.front();

  const double top = logits[keep.front()];
  std::sort(keep.begin(), keep.end());
  std::vector<double> w(keep.size());
  double total = 0.0;
  for (std::size_t i = 0; i < keep.size(); ++i) total += w[i] = std::exp((logits[keep[i]] - top) / temperature);

  const double u = unit_uniform(rng) * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    acc += w[i];
    if (u < acc) return keep[i];
  }
  return keep.back();
}

// ---------------------------------------------------------------------------
// Logit sources

struct StepLogits {
  std::vector<double> cond;
  std::vector<double> uncond;
};

class LogitSource {
 public:
  virtual ~LogitSource() = default;
  virtual std::size_t vocab_size() const = 0;
  /// Must depend only on the history. Throw to signal a source failure.
  virtual StepLogits logits(std::span<const TokenId> history) = 0;
};

/// Prompt used for the unconditional pass.
inline constexpr std::string_view kNullPrompt = "<null>";

/// Turns a prompt-conditioned logit function into a dual-pass source: the
/// unconditional branch is the same function called with kNullPrompt.
class DualPassSource : public LogitSource {
 public:
  using Fn = std::function<std::vector<double>(std::string_view prompt, std::span<const TokenId> history)>;

  DualPassSource(std::size_t vocab, std::string prompt, Fn fn) : vocab_(vocab), prompt_(std::move(prompt)), fn_(std::move(fn)) {}

  std::size_t vocab_size() const override { return vocab_; }
  StepLogits logits(std::span<const TokenId> history) override { return {fn_(prompt_, history), fn_(kNullPrompt, history)}; }

 private:
  std::size_t vocab_;
  std::string prompt_;
  Fn fn_;
};

/// Toy bigram table: logit(prev -> next) is a seeded hash of
/// (prompt, prev, next) mapped into [-scale, scale]. Row `vocab` is the
/// start-of-sequence row. The prompt only shifts the table through
/// `prompt_weight`, so cond and uncond stay correlated.
class BigramOracle {
 public:
  BigramOracle(std::size_t vocab, std::uint64_t seed, double scale = 2.0, double prompt_weight = 1.0)
      : vocab_(vocab), seed_(seed), scale_(scale), prompt_weight_(prompt_weight) {
    if (vocab == 0) throw std::invalid_argument("BigramOracle: empty vocabulary");
  }

  std::vector<double> operator()(std::string_view prompt, std::span<const TokenId> history) const {
    const std::uint64_t prev = history.empty() ? vocab_ : static_cast<std::uint64_t>(history.back());
    const std::uint64_t ph = prompt == kNullPrompt ? 0 : hash64(prompt, seed_);
    std::vector<double> out(vocab_);
    for (std::size_t next = 0; next < vocab_; ++next) {
      const std::uint64_t cell = splitmix64(seed_ ^ splitmix64(prev * 0x1000193ULL + next));
      double v = to_unit(cell) * 2.0 - 1.0;
      if (ph != 0) v += prompt_weight_ * (to_unit(splitmix64(cell ^ ph)) * 2.0 - 1.0);
      out[next] = scale_ * v;
    }
    return out;
  }

  DualPassSource source(std::string prompt) const {
    return DualPassSource(vocab_, std::move(prompt), [o = *this](std::string_view p, std::span<const TokenId> h) { return o(p, h); });
  }

 private:
  static double to_unit(std::uint64_t x) { return static_cast<double>(x >> 11) * 0x1.0p-53; }

  std::size_t vocab_;
  std::uint64_t seed_;
  double scale_;
  double prompt_weight_;
};

/// Masks an inner source so a flat decode follows the delay layout for
/// `frames` content frames: pad_id is forced at mandated pad positions and
/// forbidden everywhere else. Step i addresses (row i / S, stream i % S).
class DelayedLayoutSource : public LogitSource {
 public:
  DelayedLayoutSource(LogitSource& inner, std::size_t frames, std::size_t streams, TokenId pad_id)
      : inner_(inner), frames_(frames), streams_(streams), pad_(pad_id) {
    if (streams == 0 || frames == 0) throw std::invalid_argument("DelayedLayoutSource: frames and streams must be >= 1");
    if (pad_id < 0 || static_cast<std::size_t>(pad_id) >= inner.vocab_size())
      throw std::invalid_argument("DelayedLayoutSource: pad_id outside vocabulary");
  }

  std::size_t vocab_size() const override { return inner_.vocab_size(); }
  std::size_t total_steps() const { return delayed_length(frames_, streams_); }

  StepLogits logits(std::span<const TokenId> history) override {
    StepLogits l = inner_.logits(history);
    const std::size_t step = history.size();
    const std::size_t row = step / streams_, s = step % streams_;
    const bool content = row >= s && row - s < frames_;
    // A large finite value keeps combine_cfg's finiteness check happy;
    // decode_loop turns it into -inf after combination.
    for (auto* v : {&l.cond, &l.uncond}) {
      for (std::size_t t = 0; t < v->size(); ++t) {
        const bool is_pad = static_cast<TokenId>(t) == pad_;
        if (content == is_pad) (*v)[t] = kMasked;
      }
    }
    return l;
  }

  static constexpr double kMasked = -1e30;

 private:
  LogitSource& inner_;
  std::size_t frames_;
  std::size_t streams_;
  TokenId pad_;
};

// ---------------------------------------------------------------------------
// Decode loop

struct DecodeResult {
  std::vector<TokenId> tokens;
  bool ok = true;
  bool hit_end = false;
  std::string error;
};

/// Seed for decode step `step`; each step draws from its own stream.
inline std::uint64_t step_seed(std::uint64_t seed, std::size_t step) {
  return splitmix64(seed ^ splitmix64(0xDEC0DEULL + step));
}

/// Per step: fetch (cond, uncond), combine with CFG, sample with
/// temperature/top-k. Stops after emitting `end_token` (which is kept) or
/// after max_steps. A source failure returns the partial sequence.
inline DecodeResult decode_loop(LogitSource& source, const DecodeConfig& cfg, std::optional<TokenId> end_token = std::nullopt) {
  cfg.validate();
  DecodeResult res;
  for (std::size_t step = 0; step < cfg.max_steps; ++step) {
    std::vector<double> mixed;
    try {
      StepLogits l = source.logits(res.tokens);
      mixed = combine_cfg(l.cond, l.uncond, cfg.guidance);
      for (auto& x : mixed)
        if (x <= DelayedLayoutSource::kMasked) x = -std::numeric_limits<double>::infinity();
      std::mt19937_64 rng(step_seed(cfg.seed, step));
      const auto id = static_cast<TokenId>(sample_topk(mixed, cfg.temperature, std::min(cfg.top_k, mixed.size()), rng));
      res.tokens.push_back(id);
      if (end_token && id == *end_token) {
        res.hit_end = true;
        break;
      }
    } catch (const std::exception& e) {
      res.ok = false;
      res.error = "step " + std::to_string(step) + ": " + e.what();
      break;
    }
  }
  return res;
}

/// Wraps a flat decode of a delayed layout back into a DelayedGrid.
inline DelayedGrid tokens_to_delayed(const std::vector<TokenId>& tokens, std::size_t frames, std::size_t streams, TokenId pad_id) {
  if (tokens.size() != delayed_length(frames, streams))
    throw LayoutError("decoded " + std::to_string(tokens.size()) + " tokens, layout needs " +
                      std::to_string(delayed_length(frames, streams)));
  return DelayedGrid{frames, streams, pad_id, tokens};
}

}  // namespace capcurate
