#include "apbit/bitplane.hpp"

#include <cassert>
#include <numeric>
#include <sstream>
#include <utility>

namespace apbit {

std::string_view to_string(Encoding e) {
  return e == Encoding::ZeroOne ? "01" : "pm1";
}

Encoding parse_encoding(std::string_view s) {
  if (s == "01" || s == "zero_one" || s == "ZeroOne") return Encoding::ZeroOne;
  if (s == "pm1" || s == "plus_minus_one" || s == "PlusMinusOne") return Encoding::PlusMinusOne;
  throw Error(ErrorCode::BadEncoding, "unknown encoding '" + std::string(s) + "'");
}

std::size_t element_count(const Shape& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& dims) {
  std::ostringstream os;
  for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? "x" : "") << dims[i];
  return os.str();
}

namespace detail {

std::int32_t checked_add(std::int32_t a, std::int32_t b) {
#ifndef NDEBUG
  std::int32_t r;
  assert(!__builtin_add_overflow(a, b, &r) && "32-bit accumulator overflow");
  return r;
#else
  return static_cast<std::int32_t>(static_cast<std::uint32_t>(a) + static_cast<std::uint32_t>(b));
#endif
}

std::int32_t checked_mul(std::int32_t a, std::int32_t b) {
#ifndef NDEBUG
  std::int32_t r;
  assert(!__builtin_mul_overflow(a, b, &r) && "32-bit accumulator overflow");
  return r;
#else
  return static_cast<std::int32_t>(static_cast<std::uint32_t>(a) * static_cast<std::uint32_t>(b));
#endif
}

}  // namespace detail

// ---------------------------------------------------------------------------
// IntTensor

IntTensor::IntTensor(Shape dims) : dims_(std::move(dims)), values_(element_count(dims_), 0) {}

IntTensor::IntTensor(Shape dims, std::vector<std::int32_t> values)
    : dims_(std::move(dims)), values_(std::move(values)) {
  if (values_.size() != element_count(dims_)) {
    throw Error(ErrorCode::ShapeMismatch, "IntTensor: " + std::to_string(values_.size()) +
                                              " values for dims " + shape_string(dims_));
  }
}

// ---------------------------------------------------------------------------
// BitPlaneTensor

namespace {

void check_header(const Shape& dims, int bits, Encoding encoding) {
  if (bits < 1 || bits > kMaxBits) {
    throw Error(ErrorCode::ValueOutOfRange, "bit width " + std::to_string(bits) + " not in [1,8]");
  }
  if (encoding == Encoding::PlusMinusOne && bits != 1) {
    throw Error(ErrorCode::BadEncoding, "PlusMinusOne requires 1 bit, got " + std::to_string(bits));
  }
  if (dims.empty()) throw Error(ErrorCode::ShapeMismatch, "bit-plane tensor needs rank >= 1");
}

}  // namespace

BitPlaneTensor::BitPlaneTensor(Shape dims, int bits, Encoding encoding)
    : dims_(std::move(dims)), bits_(bits), encoding_(encoding) {
  check_header(dims_, bits_, encoding_);
  row_length_ = dims_.back();
  rows_ = row_length_ == 0 ? 0 : element_count(dims_) / row_length_;
  words_per_row_ = words_for_bits(row_length_);
  words_.assign(static_cast<std::size_t>(bits_) * rows_ * words_per_row_, 0);
}

BitPlaneTensor BitPlaneTensor::from_words(Shape dims, int bits, Encoding encoding,
                                          std::vector<Word> words) {
  BitPlaneTensor t(std::move(dims), bits, encoding);
  if (words.size() != t.words_.size()) {
    throw Error(ErrorCode::ShapeMismatch, "expected " + std::to_string(t.words_.size()) +
                                              " words, got " + std::to_string(words.size()));
  }
  const std::size_t tail = t.row_length_ % kWordBits;
  if (tail != 0) {
    const Word pad_mask = ~((Word{1} << tail) - 1);
    for (std::size_t i = t.words_per_row_ - 1; i < words.size(); i += t.words_per_row_) {
      if (words[i] & pad_mask) {
        throw Error(ErrorCode::CorruptPadding, "nonzero padding bits in word " + std::to_string(i));
      }
    }
  }
  t.words_ = std::move(words);
  return t;
}

std::span<const Word> BitPlaneTensor::plane(int t) const {
  return std::span<const Word>(words_).subspan(static_cast<std::size_t>(t) * words_per_plane(),
                                               words_per_plane());
}

std::span<const Word> BitPlaneTensor::row(int t, std::size_t r) const {
  return std::span<const Word>(words_).subspan(
      static_cast<std::size_t>(t) * words_per_plane() + r * words_per_row_, words_per_row_);
}

std::span<Word> BitPlaneTensor::mutable_row(int t, std::size_t r) {
  return std::span<Word>(words_).subspan(
      static_cast<std::size_t>(t) * words_per_plane() + r * words_per_row_, words_per_row_);
}

bool BitPlaneTensor::bit(int t, std::size_t r, std::size_t c) const {
  return (row(t, r)[c / kWordBits] >> (c % kWordBits)) & 1u;
}

void BitPlaneTensor::set_bit(int t, std::size_t r, std::size_t c, bool v) {
  assert(c < row_length_);
  Word& w = mutable_row(t, r)[c / kWordBits];
  const Word m = Word{1} << (c % kWordBits);
  w = v ? (w | m) : (w & ~m);
}

BitPlaneTensor BitPlaneTensor::with_encoding(Encoding e) const {
  check_header(dims_, bits_, e);
  BitPlaneTensor out = *this;
  out.encoding_ = e;
  return out;
}

// ---------------------------------------------------------------------------
// Operations

BitPlaneTensor decompose(const IntTensor& x, int bits, Encoding encoding, OpCounter* ops) {
  BitPlaneTensor out(x.dims(), bits, encoding);
  const std::size_t rows = out.rows();
  const std::size_t cols = out.row_length();
  const auto values = x.values();

  if (encoding == Encoding::PlusMinusOne) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (values[i] != -1 && values[i] != 1) {
        throw Error(ErrorCode::ValueOutOfRange,
                    "PlusMinusOne value " + std::to_string(values[i]) + " at " + std::to_string(i));
      }
    }
  } else {
    const std::int32_t hi = (1 << bits) - 1;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (values[i] < 0 || values[i] > hi) {
        throw Error(ErrorCode::ValueOutOfRange, "value " + std::to_string(values[i]) + " at " +
                                                    std::to_string(i) + " exceeds " +
                                                    std::to_string(bits) + "-bit range");
      }
    }
  }

  for (int t = 0; t < bits; ++t) {
    for (std::size_t r = 0; r < rows; ++r) {
      auto dst = out.mutable_row(t, r);
      const std::int32_t* src = values.data() + r * cols;
      for (std::size_t c = 0; c < cols; ++c) {
        const std::uint32_t stored =
            encoding == Encoding::PlusMinusOne ? (src[c] > 0 ? 1u : 0u)
                                               : (static_cast<std::uint32_t>(src[c]) >> t) & 1u;
        dst[c / kWordBits] |= Word{stored} << (c % kWordBits);
      }
    }
  }
  if (ops) ops->add_decompose(static_cast<std::uint64_t>(values.size()) * bits);
  return out;
}

IntTensor reconstruct(const BitPlaneTensor& t) {
  IntTensor out(t.dims());
  auto values = out.values();
  const std::size_t cols = t.row_length();
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      std::int32_t v = 0;
      for (int p = 0; p < t.bits(); ++p) v |= static_cast<std::int32_t>(t.bit(p, r, c)) << p;
      values[r * cols + c] = t.encoding() == Encoding::PlusMinusOne ? 2 * v - 1 : v;
    }
  }
  return out;
}

IntTensor combine(std::span<const IntTensor> parts, int p, int q, OpCounter* ops) {
  if (p < 1 || q < 1 || parts.size() != static_cast<std::size_t>(p) * q) {
    throw Error(ErrorCode::ShapeMismatch, "combine expects p*q = " + std::to_string(p * q) +
                                              " parts, got " + std::to_string(parts.size()));
  }
  IntTensor out(parts.front().dims());
  for (const auto& part : parts) {
    if (part.dims() != out.dims()) {
      throw Error(ErrorCode::ShapeMismatch, "combine part dims " + shape_string(part.dims()) +
                                                " vs " + shape_string(out.dims()));
    }
  }
  auto y = out.values();
  for (int s = 0; s < p; ++s) {
    for (int t = 0; t < q; ++t) {
      const auto part = parts[static_cast<std::size_t>(s) * q + t].values();
      const std::int32_t weight = std::int32_t{1} << (s + t);
      for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] = detail::checked_add(y[i], detail::checked_mul(part[i], weight));
      }
    }
  }
  if (ops) ops->add_combine(static_cast<std::uint64_t>(y.size()) * p * q);
  return out;
}

IntTensor pad_columns(const IntTensor& x, std::size_t multiple) {
  if (x.dims().size() != 2 || multiple == 0) {
    throw Error(ErrorCode::ShapeMismatch, "pad_columns expects a rank-2 tensor");
  }
  const std::size_t rows = x.dims()[0];
  const std::size_t cols = x.dims()[1];
  const std::size_t padded = (cols + multiple - 1) / multiple * multiple;
  IntTensor out({rows, padded});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out.at(r, c) = x.at(r, c);
  }
  return out;
}

}  // namespace apbit
