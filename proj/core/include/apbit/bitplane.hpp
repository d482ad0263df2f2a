#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "apbit/error.hpp"
#include "apbit/instrument.hpp"

namespace apbit {

using Word = std::uint64_t;
inline constexpr int kWordBits = 64;
inline constexpr int kMaxBits = 8;

using Shape = std::vector<std::size_t>;

// How a stored bit is read back as a number.
enum class Encoding : std::uint8_t {
  ZeroOne = 0,       // bit b means value b
  PlusMinusOne = 1,  // bit 0 means -1, bit 1 means +1
};

std::string_view to_string(Encoding e);
Encoding parse_encoding(std::string_view s);  // "01" | "pm1"

std::size_t element_count(const Shape& dims);
std::string shape_string(const Shape& dims);

inline constexpr std::size_t words_for_bits(std::size_t n) {
  return (n + kWordBits - 1) / kWordBits;
}

// Dense row-major 32-bit signed integer tensor.
class IntTensor {
 public:
  IntTensor() = default;
  explicit IntTensor(Shape dims);
  IntTensor(Shape dims, std::vector<std::int32_t> values);

  const Shape& dims() const { return dims_; }
  std::size_t size() const { return values_.size(); }
  std::span<const std::int32_t> values() const { return values_; }
  std::span<std::int32_t> values() { return values_; }

  std::int32_t operator[](std::size_t i) const { return values_[i]; }
  std::int32_t& operator[](std::size_t i) { return values_[i]; }

  // 2-D convenience accessors (rank must be 2).
  std::int32_t at(std::size_t r, std::size_t c) const { return values_[r * dims_[1] + c]; }
  std::int32_t& at(std::size_t r, std::size_t c) { return values_[r * dims_[1] + c]; }

  bool operator==(const IntTensor&) const = default;

 private:
  Shape dims_;
  std::vector<std::int32_t> values_;
};

// A p-bit tensor stored as p packed 1-bit planes, plane-major. Each plane is a
// sequence of rows; a row is the innermost dimension packed little-endian
// (element c lives in word c/64, bit c%64) and padded with zero bits to a
// whole number of 64-bit words.
class BitPlaneTensor {
 public:
  BitPlaneTensor() = default;
  // All-zero tensor.
  BitPlaneTensor(Shape dims, int bits, Encoding encoding);

  // Adopts raw plane words; rejects illegal headers and nonzero padding bits.
  static BitPlaneTensor from_words(Shape dims, int bits, Encoding encoding, std::vector<Word> words);

  const Shape& dims() const { return dims_; }
  int bits() const { return bits_; }
  Encoding encoding() const { return encoding_; }
  std::size_t rows() const { return rows_; }
  std::size_t row_length() const { return row_length_; }
  std::size_t words_per_row() const { return words_per_row_; }
  std::size_t words_per_plane() const { return rows_ * words_per_row_; }

  std::span<const Word> words() const { return words_; }
  std::span<const Word> plane(int t) const;
  std::span<const Word> row(int t, std::size_t r) const;
  std::span<Word> mutable_row(int t, std::size_t r);

  bool bit(int t, std::size_t r, std::size_t c) const;
  void set_bit(int t, std::size_t r, std::size_t c, bool v);

  // Reinterprets the stored bits under a different encoding (same planes).
  BitPlaneTensor with_encoding(Encoding e) const;

  bool operator==(const BitPlaneTensor&) const = default;

 private:
  Shape dims_;
  int bits_ = 0;
  Encoding encoding_ = Encoding::ZeroOne;
  std::size_t rows_ = 0;
  std::size_t row_length_ = 0;
  std::size_t words_per_row_ = 0;
  std::vector<Word> words_;
};

// Splits each value into `bits` planes: plane t holds (x >> t) & 1.
// PlusMinusOne maps -1 to bit 0 and +1 to bit 1 and requires bits == 1.
BitPlaneTensor decompose(const IntTensor& x, int bits, Encoding encoding, OpCounter* ops = nullptr);

// Inverse of decompose.
IntTensor reconstruct(const BitPlaneTensor& t);

// Bit combination: Y = sum_s sum_t Y^(s,t) * 2^(s+t). `parts` is indexed
// s * q + t and all parts share dims.
IntTensor combine(std::span<const IntTensor> parts, int p, int q, OpCounter* ops = nullptr);

// Zero-extends the last dimension of a rank-2 tensor up to a multiple of
// `multiple` columns.
IntTensor pad_columns(const IntTensor& x, std::size_t multiple);

namespace detail {
// Signed accumulate that traps on 32-bit overflow in debug builds.
std::int32_t checked_add(std::int32_t a, std::int32_t b);
std::int32_t checked_mul(std::int32_t a, std::int32_t b);
}  // namespace detail

}  // namespace apbit
