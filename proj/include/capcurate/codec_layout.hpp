#pragma once

// Delay interleaving for multi-stream codec tokens. Stream s is shifted by s
// frames, so delayed row t holds frame t - s of stream s (or pad). Rows are
// flattened row-major: each step emits all S streams consecutively.
//
// Binary grid files (all fields little-endian):
//   bytes 0..3   magic "CGRD" (frame grid) or "CDLY" (delayed grid)
//   bytes 4..7   uint32 T  (content frames)
//   bytes 8..11  uint32 S  (streams)
//   bytes 12..15 int32  pad_id
//   then rows*S int32 token ids, row-major; rows = T for CGRD, T+S-1 for CDLY

#include <array>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace capcurate {

class LayoutError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using TokenId = std::int32_t;

inline constexpr std::size_t kDefaultStreams = 8;

struct CodecFrameGrid {
  std::size_t frames = 0;
  std::size_t streams = kDefaultStreams;
  TokenId pad_id = -1;
  std::vector<TokenId> tokens;  // frames x streams, row-major

  TokenId at(std::size_t t, std::size_t s) const { return tokens[t * streams + s]; }
  TokenId& at(std::size_t t, std::size_t s) { return tokens[t * streams + s]; }
  bool operator==(const CodecFrameGrid&) const = default;
};

struct DelayedGrid {
  std::size_t frames = 0;  // content frames T
  std::size_t streams = kDefaultStreams;
  TokenId pad_id = -1;
  std::vector<TokenId> flat;  // (T + S - 1) x S, row-major

  std::size_t rows() const { return frames + streams - 1; }
  TokenId at(std::size_t row, std::size_t s) const { return flat[row * streams + s]; }
  bool operator==(const DelayedGrid&) const = default;
};

inline constexpr std::size_t delayed_length(std::size_t frames, std::size_t streams) {
  return (frames + streams - 1) * streams;
}

inline DelayedGrid interleave(const CodecFrameGrid& grid) {
  const std::size_t T = grid.frames, S = grid.streams;
  if (T == 0 || S == 0) throw LayoutError("interleave needs T >= 1 and S >= 1");
  if (grid.tokens.size() != T * S) throw LayoutError("grid token count does not match T x S");
  for (TokenId id : grid.tokens) {
    if (id < 0) throw LayoutError("negative token id in content grid");
    if (id == grid.pad_id) throw LayoutError("pad_id appears as a content token");
  }

  DelayedGrid out{T, S, grid.pad_id, std::vector<TokenId>(delayed_length(T, S), grid.pad_id)};
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t s = 0; s < S; ++s) out.flat[(t + s) * S + s] = grid.at(t, s);
  return out;
}

inline CodecFrameGrid deinterleave(const DelayedGrid& delayed, std::size_t frames, std::size_t streams) {
  if (streams == 0) throw LayoutError("deinterleave needs S >= 1");
  if (delayed.streams != streams) throw LayoutError("stream count mismatch");
  const std::size_t rows = frames + streams - 1;
  if (delayed.flat.size() != rows * streams)
    throw LayoutError("delayed grid has " + std::to_string(delayed.flat.size()) + " tokens, expected " +
                      std::to_string(rows * streams));

  CodecFrameGrid out{frames, streams, delayed.pad_id, std::vector<TokenId>(frames * streams)};
  for (std::size_t row = 0; row < rows; ++row) {
    for (std::size_t s = 0; s < streams; ++s) {
      const TokenId id = delayed.flat[row * streams + s];
      const bool content = row >= s && row - s < frames;
      if (content) {
        if (id == delayed.pad_id) throw LayoutError("pad found at content position (row " + std::to_string(row) + ", stream " + std::to_string(s) + ")");
        out.at(row - s, s) = id;
      } else if (id != delayed.pad_id) {
        throw LayoutError("content token at mandated pad position (row " + std::to_string(row) + ", stream " + std::to_string(s) + ")");
      }
    }
  }
  return out;
}

inline CodecFrameGrid deinterleave(const DelayedGrid& delayed) { return deinterleave(delayed, delayed.frames, delayed.streams); }

// ---------------------------------------------------------------------------
// Binary I/O

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                              static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
  os.write(b.data(), 4);
}

inline std::uint32_t get_u32(std::istream& is) {
  std::array<unsigned char, 4> b{};
  if (!is.read(reinterpret_cast<char*>(b.data()), 4)) throw LayoutError("truncated grid file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void write_grid(std::ostream& os, const char* magic, std::size_t T, std::size_t S, TokenId pad,
                       const std::vector<TokenId>& ids) {
  os.write(magic, 4);
  put_u32(os, static_cast<std::uint32_t>(T));
  put_u32(os, static_cast<std::uint32_t>(S));
  put_u32(os, static_cast<std::uint32_t>(pad));
  for (TokenId id : ids) put_u32(os, static_cast<std::uint32_t>(id));
}

}  // namespace detail

inline void write_frame_grid(std::ostream& os, const CodecFrameGrid& g) {
  detail::write_grid(os, "CGRD", g.frames, g.streams, g.pad_id, g.tokens);
}

inline void write_delayed_grid(std::ostream& os, const DelayedGrid& g) {
  detail::write_grid(os, "CDLY", g.frames, g.streams, g.pad_id, g.flat);
}

/// Reads either kind of grid file; returns true for a delayed grid.
inline bool read_grid(std::istream& is, CodecFrameGrid& frame, DelayedGrid& delayed) {
  char magic[4];
  if (!is.read(magic, 4)) throw LayoutError("truncated grid file");
  const bool is_delayed = std::memcmp(magic, "CDLY", 4) == 0;
  if (!is_delayed && std::memcmp(magic, "CGRD", 4) != 0) throw LayoutError("bad grid magic");
  const std::size_t T = detail::get_u32(is), S = detail::get_u32(is);
  const auto pad = static_cast<TokenId>(detail::get_u32(is));
  if (S == 0) throw LayoutError("grid file with zero streams");
  const std::size_t rows = is_delayed ? T + S - 1 : T;
  std::vector<TokenId> ids(rows * S);
  for (auto& id : ids) id = static_cast<TokenId>(detail::get_u32(is));
  if (is_delayed) {
    delayed = DelayedGrid{T, S, pad, std::move(ids)};
  } else {
    frame = CodecFrameGrid{T, S, pad, std::move(ids)};
  }
  return is_delayed;
}

}  // namespace capcurate
