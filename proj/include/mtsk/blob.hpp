#pragma once

#include "mtsk/tensor.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>

namespace mtsk {

static_assert(std::endian::native == std::endian::little,
              "blob files are raw little-endian float32; big-endian hosts need byte swapping");

/// Appends float32 matrices, row-major, to an in-memory byte buffer.
class BlobWriter {
 public:
  /// Returns the byte offset the matrix was written at.
  template <typename Scalar>
  std::uint64_t append(const Matrix<Scalar>& m) {
    const std::uint64_t offset = bytes_.size();
    const Matrix<float> f = m.template cast<float>();
    const auto* p = reinterpret_cast<const char*>(f.data());
    bytes_.append(p, std::size_t(f.size()) * sizeof(float));
    return offset;
  }

  const std::string& bytes() const { return bytes_; }

 private:
  std::string bytes_;
};

/// Bounds-checked reads from a float32 blob.
class BlobReader {
 public:
  explicit BlobReader(std::string bytes) : bytes_(std::move(bytes)) {}

  bool fits(std::uint64_t offset, Index rows, Index cols) const {
    const std::uint64_t need = std::uint64_t(rows) * std::uint64_t(cols) * sizeof(float);
    return offset <= bytes_.size() && need <= bytes_.size() - offset;
  }

  template <typename Scalar>
  Matrix<Scalar> read(std::uint64_t offset, Index rows, Index cols,
                      const std::string& what) const {
    if (!fits(offset, rows, cols)) {
      throw std::runtime_error("blob truncated: " + what + " " + shape_string(rows, cols) +
                               " at byte " + std::to_string(offset) + " exceeds " +
                               std::to_string(bytes_.size()) + " bytes");
    }
    Matrix<float> f(rows, cols);
    std::memcpy(f.data(), bytes_.data() + offset, std::size_t(rows * cols) * sizeof(float));
    return f.template cast<Scalar>();
  }

  const std::string& bytes() const { return bytes_; }

 private:
  std::string bytes_;
};

}  // namespace mtsk
