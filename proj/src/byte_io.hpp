#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

#include "flexlog/error.hpp"

namespace flexlog::bytes {

template <typename U>
void put_uint(std::string& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xffu));
}

inline void put_f32(std::string& out, float v) { put_uint(out, std::bit_cast<std::uint32_t>(v)); }
inline void put_f64(std::string& out, double v) { put_uint(out, std::bit_cast<std::uint64_t>(v)); }

/// Little-endian cursor over a byte buffer; every read past the end and every
/// non-finite float raises `code`.
class Reader {
 public:
  Reader(std::string_view data, std::size_t& offset, ErrorCode code) : data_(data), offset_(offset), code_(code) {}

  template <typename U>
  U uint() {
    need(sizeof(U));
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      value |= static_cast<U>(static_cast<unsigned char>(data_[offset_ + i])) << (8 * i);
    }
    offset_ += sizeof(U);
    return value;
  }

  float f32() { return finite(std::bit_cast<float>(uint<std::uint32_t>())); }
  double f64() { return finite(std::bit_cast<double>(uint<std::uint64_t>())); }

  std::string_view take(std::size_t n) {
    need(n);
    const std::string_view s = data_.substr(offset_, n);
    offset_ += n;
    return s;
  }

  std::size_t remaining() const { return data_.size() - offset_; }

 private:
  void need(std::size_t n) const {
    if (offset_ > data_.size() || data_.size() - offset_ < n) throw Error(code_, "truncated data");
  }
  template <typename T>
  T finite(T v) const {
    if (!std::isfinite(v)) throw Error(code_, "non-finite value");
    return v;
  }

  std::string_view data_;
  std::size_t& offset_;
  ErrorCode code_;
};

}  // namespace flexlog::bytes
