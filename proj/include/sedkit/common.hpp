#pragma once

// Shared error type, byte-level I/O helpers and the FNV-1a hash used for
// stage content addressing.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sedkit {

enum class Errc {
  malformed_header,
  unsupported_encoding,
  truncated_data,
  bad_argument,
  unknown_class,
  duplicate_clip,
  empty_tags,
  parse_error,
  format_error,
  shape_mismatch,
  degenerate_input,
  io_error,
  missing_prerequisite,
  non_finite,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::malformed_header: return "malformed_header";
    case Errc::unsupported_encoding: return "unsupported_encoding";
    case Errc::truncated_data: return "truncated_data";
    case Errc::bad_argument: return "bad_argument";
    case Errc::unknown_class: return "unknown_class";
    case Errc::duplicate_clip: return "duplicate_clip";
    case Errc::empty_tags: return "empty_tags";
    case Errc::parse_error: return "parse_error";
    case Errc::format_error: return "format_error";
    case Errc::shape_mismatch: return "shape_mismatch";
    case Errc::degenerate_input: return "degenerate_input";
    case Errc::io_error: return "io_error";
    case Errc::missing_prerequisite: return "missing_prerequisite";
    case Errc::non_finite: return "non_finite";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

// ---- little-endian byte I/O -------------------------------------------------

inline void put_u8(std::string& out, uint8_t v) { out.push_back(static_cast<char>(v)); }

inline void put_u16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::string& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

class ByteReader {
 public:
  ByteReader(const uint8_t* data, size_t size) : data_(data), size_(size) {}
  explicit ByteReader(const std::string& s)
      : data_(reinterpret_cast<const uint8_t*>(s.data())), size_(s.size()) {}

  size_t remaining() const { return size_ - pos_; }
  size_t pos() const { return pos_; }
  void skip(size_t n) { need(n); pos_ += n; }

  uint8_t u8() { need(1); return data_[pos_++]; }
  uint16_t u16() {
    need(2);
    uint16_t v = static_cast<uint16_t>(data_[pos_]) | static_cast<uint16_t>(data_[pos_ + 1]) << 8;
    pos_ += 2;
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() {
    uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string bytes(size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
    pos_ += n;
    return s;
  }
  const uint8_t* raw(size_t n) { need(n); const uint8_t* p = data_ + pos_; pos_ += n; return p; }

 private:
  void need(size_t n) const {
    if (pos_ + n > size_) fail(Errc::truncated_data, "unexpected end of data");
  }
  const uint8_t* data_;
  size_t size_;
  size_t pos_ = 0;
};

// ---- whole-file helpers -----------------------------------------------------

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io_error, "cannot open " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (!in.good() && !in.eof()) fail(Errc::io_error, "read failed: " + path.string());
  return data;
}

// Writes via a temp file and renames so readers never observe partial content.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& data) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::io_error, "cannot write " + tmp.string());
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out.good()) fail(Errc::io_error, "write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

// ---- FNV-1a 64-bit ----------------------------------------------------------

inline uint64_t fnv1a64(const void* data, size_t size, uint64_t seed = 0xcbf29ce484222325ull) {
  const uint8_t* p = static_cast<const uint8_t*>(data);
  uint64_t h = seed;
  for (size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t fnv1a64(const std::string& s, uint64_t seed = 0xcbf29ce484222325ull) {
  return fnv1a64(s.data(), s.size(), seed);
}

inline std::string hex16(uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

}  // namespace sedkit
