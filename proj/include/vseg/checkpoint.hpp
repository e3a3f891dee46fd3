#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vseg/tensor.hpp"

namespace vseg::train {

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

enum class CheckpointErrorKind { BadMagic, VersionMismatch, Truncated, Malformed };

class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(CheckpointErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  CheckpointErrorKind kind() const { return kind_; }

 private:
  CheckpointErrorKind kind_;
};

/// Named-tensor archive with a trailing config echo. The binary grammar is
/// bit-exact: "VSEG" magic, u32 LE version, u32 LE tensor count, then per
/// tensor {u32 LE name length, UTF-8 name, u32 LE rank, u32 LE extents,
/// f32 LE payload}, then a u32 LE length-prefixed UTF-8 config echo.
struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  std::uint32_t version = kFormatVersion;
  std::vector<NamedTensor> tensors;
  std::string config_echo;
};

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

inline void put_f32(std::vector<std::uint8_t>& out, float f) {
  put_u32(out, std::bit_cast<std::uint32_t>(f));
}

struct Cursor {
  const std::uint8_t* p;
  std::size_t size;
  std::size_t pos = 0;

  void need(std::size_t n, const char* what) {
    if (pos + n > size) {
      throw CheckpointError(CheckpointErrorKind::Truncated,
                            std::string("checkpoint truncated while reading ") + what + " at byte " +
                                std::to_string(pos));
    }
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    const std::uint32_t v = static_cast<std::uint32_t>(p[pos]) | (static_cast<std::uint32_t>(p[pos + 1]) << 8) |
                            (static_cast<std::uint32_t>(p[pos + 2]) << 16) |
                            (static_cast<std::uint32_t>(p[pos + 3]) << 24);
    pos += 4;
    return v;
  }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(p + pos), n);
    pos += n;
    return s;
  }
};

}  // namespace detail

inline std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), {'V', 'S', 'E', 'G'});
  detail::put_u32(out, ckpt.version);
  detail::put_u32(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    detail::put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    detail::put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) detail::put_u32(out, static_cast<std::uint32_t>(d));
    for (float f : t.data) detail::put_f32(out, f);
  }
  detail::put_u32(out, static_cast<std::uint32_t>(ckpt.config_echo.size()));
  out.insert(out.end(), ckpt.config_echo.begin(), ckpt.config_echo.end());
  return out;
}

inline Checkpoint decode_checkpoint(const std::uint8_t* bytes, std::size_t size) {
  detail::Cursor cur{bytes, size};
  cur.need(4, "magic");
  if (std::memcmp(bytes, "VSEG", 4) != 0) {
    throw CheckpointError(CheckpointErrorKind::BadMagic, "not a checkpoint: bad magic bytes");
  }
  cur.pos = 4;
  Checkpoint ckpt;
  ckpt.version = cur.u32("format version");
  if (ckpt.version != Checkpoint::kFormatVersion) {
    throw CheckpointError(CheckpointErrorKind::VersionMismatch,
                          "unsupported checkpoint format version " + std::to_string(ckpt.version));
  }
  const std::uint32_t count = cur.u32("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const std::uint32_t name_len = cur.u32("tensor name length");
    t.name = cur.str(name_len, "tensor name");
    const std::uint32_t rank = cur.u32("tensor rank");
    if (rank > 8) {
      throw CheckpointError(CheckpointErrorKind::Malformed,
                            "tensor " + t.name + ": implausible rank " + std::to_string(rank));
    }
    std::int64_t n = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      const std::uint32_t d = cur.u32("tensor extent");
      if (d == 0 || n * d > (1 << 30)) {
        throw CheckpointError(CheckpointErrorKind::Malformed,
                              "tensor " + t.name + ": invalid extent " + std::to_string(d));
      }
      t.shape.push_back(static_cast<int>(d));
      n *= d;
    }
    cur.need(static_cast<std::size_t>(n) * 4, "tensor payload");
    t.data.resize(static_cast<std::size_t>(n));
    for (std::int64_t e = 0; e < n; ++e) {
      t.data[static_cast<std::size_t>(e)] = std::bit_cast<float>(cur.u32("tensor payload"));
    }
    ckpt.tensors.push_back(std::move(t));
  }
  const std::uint32_t echo_len = cur.u32("config echo length");
  ckpt.config_echo = cur.str(echo_len, "config echo");
  return ckpt;
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot create " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes.data(), bytes.size());
}

}  // namespace vseg::train
