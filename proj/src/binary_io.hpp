#pragma once

// Explicit little-endian encoding, independent of host byte order.

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "emosphere/errors.hpp"

namespace emosphere::detail {

class ByteWriter {
 public:
  void bytes(const char* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }

  template <typename U>
  void unsigned_le(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
  }

  void u32(std::uint32_t v) { unsigned_le(v); }
  void u64(std::uint64_t v) { unsigned_le(v); }
  void i32(std::int32_t v) { unsigned_le(static_cast<std::uint32_t>(v)); }
  void f32(float v) { unsigned_le(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { unsigned_le(std::bit_cast<std::uint64_t>(v)); }

  std::vector<char>& buffer() { return buf_; }

 private:
  std::vector<char> buf_;
};

class ByteReader {
 public:
  ByteReader(const char* data, std::size_t size, std::string source)
      : data_(data), size_(size), source_(std::move(source)) {}

  void bytes(char* out, std::size_t n) {
    need(n);
    std::memcpy(out, data_ + pos_, n);
    pos_ += n;
  }

  template <typename U>
  U unsigned_le() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<U>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return v;
  }

  std::uint32_t u32() { return unsigned_le<std::uint32_t>(); }
  std::uint64_t u64() { return unsigned_le<std::uint64_t>(); }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }

  std::size_t remaining() const noexcept { return size_ - pos_; }

 private:
  void need(std::size_t n) const {
    if (size_ - pos_ < n) {
      throw FormatError(source_ + ": truncated (needed " + std::to_string(n) +
                        " more bytes at offset " + std::to_string(pos_) + ")");
    }
  }

  const char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
  std::string source_;
};

}  // namespace emosphere::detail
