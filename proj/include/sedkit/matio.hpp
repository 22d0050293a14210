#pragma once

// Binary matrix container used for feature caches and NMF factor dumps.
// Layout: magic "LMEL", u8 version=1, u32 rows, u32 cols (little-endian),
// then rows*cols float32 little-endian, row-major.

#include <bit>
#include <cstdint>
#include <filesystem>
#include <string>

#include <Eigen/Dense>

#include "sedkit/common.hpp"

namespace sedkit {

using MatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr char kMatrixMagic[4] = {'L', 'M', 'E', 'L'};
inline constexpr uint8_t kMatrixVersion = 1;

inline std::string encode_matrix(const MatrixF& m) {
  std::string out;
  const size_t count = static_cast<size_t>(m.rows()) * static_cast<size_t>(m.cols());
  out.reserve(13 + count * 4);
  out.append(kMatrixMagic, 4);
  put_u8(out, kMatrixVersion);
  put_u32(out, static_cast<uint32_t>(m.rows()));
  put_u32(out, static_cast<uint32_t>(m.cols()));
  if constexpr (std::endian::native == std::endian::little) {
    out.append(reinterpret_cast<const char*>(m.data()), count * 4);
  } else {
    for (size_t i = 0; i < count; ++i) put_f32(out, m.data()[i]);
  }
  return out;
}

inline MatrixF decode_matrix(const std::string& bytes, const std::string& context) {
  ByteReader r(bytes);
  if (bytes.size() < 13) fail(Errc::format_error, "matrix file too small: " + context);
  if (r.bytes(4) != std::string(kMatrixMagic, 4))
    fail(Errc::format_error, "bad magic in " + context);
  uint8_t version = r.u8();
  if (version != kMatrixVersion)
    fail(Errc::format_error, "unsupported version " + std::to_string(version) + " in " + context);
  uint32_t rows = r.u32();
  uint32_t cols = r.u32();
  size_t count = static_cast<size_t>(rows) * cols;
  if (r.remaining() != count * 4)
    fail(Errc::format_error, "size mismatch in " + context + ": header says " +
                                 std::to_string(count * 4) + " payload bytes, file has " +
                                 std::to_string(r.remaining()));
  MatrixF m(rows, cols);
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(m.data(), r.raw(count * 4), count * 4);
  } else {
    for (size_t i = 0; i < count; ++i) m.data()[i] = r.f32();
  }
  return m;
}

inline void write_matrix(const std::filesystem::path& path, const MatrixF& m) {
  write_file_atomic(path, encode_matrix(m));
}

inline MatrixF read_matrix(const std::filesystem::path& path) {
  return decode_matrix(read_file(path), path.string());
}

}  // namespace sedkit
