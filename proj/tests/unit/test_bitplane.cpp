#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "apbit/bitplane.hpp"
#include "apbit/bpt_io.hpp"
#include "apbit/error.hpp"
#include "oracle.hpp"

using namespace apbit;

namespace {

IntTensor plane_values(const BitPlaneTensor& t, int plane) {
  IntTensor out(t.dims());
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.row_length(); ++c) out[r * t.row_length() + c] = t.bit(plane, r, c);
  return out;
}

IntTensor mat(std::size_t r, std::size_t c, std::vector<std::int32_t> v) { return IntTensor({r, c}, std::move(v)); }

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no apbit::Error thrown");
  return ErrorCode::IoError;
}

}  // namespace

TEST_CASE("decompose extracts bit planes") {
  SUBCASE("single element") {
    const auto t = decompose(mat(1, 1, {2}), 2, Encoding::ZeroOne);
    CHECK(plane_values(t, 0) == mat(1, 1, {0}));
    CHECK(plane_values(t, 1) == mat(1, 1, {1}));
  }
  SUBCASE("2x2") {
    const auto t = decompose(mat(2, 2, {0, 1, 3, 2}), 2, Encoding::ZeroOne);
    CHECK(plane_values(t, 0) == mat(2, 2, {0, 1, 1, 0}));
    CHECK(plane_values(t, 1) == mat(2, 2, {0, 0, 1, 1}));
  }
  SUBCASE("+-1 maps -1 to stored 0") {
    const auto t = decompose(mat(1, 2, {-1, 1}), 1, Encoding::PlusMinusOne);
    CHECK(plane_values(t, 0) == mat(1, 2, {0, 1}));
  }
}

TEST_CASE("decompose rejects out-of-range values and bad headers") {
  CHECK(code_of([] { decompose(mat(1, 1, {4}), 2, Encoding::ZeroOne); }) == ErrorCode::ValueOutOfRange);
  CHECK(code_of([] { decompose(mat(1, 1, {-1}), 3, Encoding::ZeroOne); }) == ErrorCode::ValueOutOfRange);
  CHECK(code_of([] { decompose(mat(1, 1, {0}), 1, Encoding::PlusMinusOne); }) == ErrorCode::ValueOutOfRange);
  CHECK(code_of([] { decompose(mat(1, 1, {1}), 2, Encoding::PlusMinusOne); }) == ErrorCode::BadEncoding);
  CHECK(code_of([] { decompose(mat(1, 1, {1}), 9, Encoding::ZeroOne); }) == ErrorCode::ValueOutOfRange);
  CHECK(code_of([] { decompose(mat(1, 1, {1}), 0, Encoding::ZeroOne); }) == ErrorCode::ValueOutOfRange);
}

TEST_CASE("reconstruct examples") {
  BitPlaneTensor t({1, 1}, 2, Encoding::ZeroOne);
  t.set_bit(0, 0, 0, true);
  t.set_bit(1, 0, 0, true);
  CHECK(reconstruct(t) == mat(1, 1, {3}));
  const BitPlaneTensor s({1, 1}, 1, Encoding::PlusMinusOne);
  CHECK(reconstruct(s) == mat(1, 1, {-1}));
}

TEST_CASE("property: decompose/reconstruct round trip") {
  std::mt19937_64 rng(7);
  for (int iter = 0; iter < 200; ++iter) {
    const int bits = std::uniform_int_distribution<int>(1, 8)(rng);
    const Encoding enc = bits == 1 && rng() % 2 ? Encoding::PlusMinusOne : Encoding::ZeroOne;
    const std::size_t rows = 1 + rng() % 9, cols = 1 + rng() % 200;
    const auto x = oracle::random_values({rows, cols}, bits, enc, rng);
    const auto t = decompose(x, bits, enc);
    CHECK(t.bits() == bits);
    CHECK(t.words_per_row() == words_for_bits(cols));
    REQUIRE(reconstruct(t) == x);
  }
}

TEST_CASE("padding bits are zero and validated on adoption") {
  const auto t = decompose(mat(1, 3, {1, 1, 1}), 1, Encoding::ZeroOne);
  CHECK(t.words()[0] == 0b111u);
  auto words = std::vector<Word>(t.words().begin(), t.words().end());
  CHECK(BitPlaneTensor::from_words({1, 3}, 1, Encoding::ZeroOne, words) == t);
  words[0] |= Word{1} << 40;
  CHECK(code_of([&] { BitPlaneTensor::from_words({1, 3}, 1, Encoding::ZeroOne, words); }) ==
        ErrorCode::CorruptPadding);
  CHECK(code_of([&] { BitPlaneTensor::from_words({1, 3}, 2, Encoding::ZeroOne, words); }) ==
        ErrorCode::ShapeMismatch);
}

TEST_CASE("combine weights partial products by 2^(s+t)") {
  SUBCASE("p=1, q=2") {
    const std::vector<IntTensor> parts{mat(1, 1, {1}), mat(1, 1, {3})};
    CHECK(combine(parts, 1, 2) == mat(1, 1, {7}));
  }
  SUBCASE("p=2, q=2 all ones") {
    const std::vector<IntTensor> parts(4, mat(1, 1, {1}));
    CHECK(combine(parts, 2, 2) == mat(1, 1, {9}));
  }
  SUBCASE("shape mismatch") {
    const std::vector<IntTensor> parts{mat(1, 1, {1}), mat(1, 2, {1, 1})};
    CHECK(code_of([&] { combine(parts, 1, 2); }) == ErrorCode::ShapeMismatch);
    const std::vector<IntTensor> three(3, mat(1, 1, {1}));
    CHECK(code_of([&] { combine(three, 2, 2); }) == ErrorCode::ShapeMismatch);
  }
}

TEST_CASE("property: combine is linear") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> v(-1000, 1000);
  for (int iter = 0; iter < 50; ++iter) {
    const int p = 1 + static_cast<int>(rng() % 4), q = 1 + static_cast<int>(rng() % 4);
    std::vector<IntTensor> a, b, sum;
    for (int i = 0; i < p * q; ++i) {
      IntTensor x({3, 5}), y({3, 5}), s({3, 5});
      for (std::size_t k = 0; k < 15; ++k) {
        x[k] = v(rng);
        y[k] = v(rng);
        s[k] = x[k] + y[k];
      }
      a.push_back(x);
      b.push_back(y);
      sum.push_back(s);
    }
    const auto ca = combine(a, p, q), cb = combine(b, p, q), cs = combine(sum, p, q);
    for (std::size_t k = 0; k < 15; ++k) CHECK(cs[k] == ca[k] + cb[k]);
  }
}

TEST_CASE("property: decompose and combine op counts scale as (p+q)n^2 and pq n^2") {
  std::mt19937_64 rng(3);
  for (std::size_t n : {16u, 32u, 64u}) {
    for (int p = 1; p <= 3; ++p) {
      const int q = 2;
      OpCounter ops;
      const auto w = oracle::random_values({n, n}, p, Encoding::ZeroOne, rng);
      const auto x = oracle::random_values({n, n}, q, Encoding::ZeroOne, rng);
      decompose(w, p, Encoding::ZeroOne, &ops);
      decompose(x, q, Encoding::ZeroOne, &ops);
      std::vector<IntTensor> parts(static_cast<std::size_t>(p * q), IntTensor({n, n}));
      combine(parts, p, q, &ops);
      const auto s = ops.snapshot();
      CHECK(s.decompose_ops == static_cast<std::uint64_t>(p + q) * n * n);
      CHECK(s.combine_ops == static_cast<std::uint64_t>(p * q) * n * n);
    }
  }
}

TEST_CASE("pad_columns zero-extends rows") {
  const auto padded = pad_columns(mat(2, 3, {1, 2, 3, 4, 5, 6}), 4);
  CHECK(padded == mat(2, 4, {1, 2, 3, 0, 4, 5, 6, 0}));
  CHECK(pad_columns(padded, 4) == padded);
}

TEST_CASE(".bpt round trip and header layout") {
  std::mt19937_64 rng(5);
  const auto x = oracle::random_values({3, 4, 70}, 3, Encoding::ZeroOne, rng);
  const auto t = decompose(x, 3, Encoding::ZeroOne);
  std::stringstream ss;
  write_bpt(ss, t);
  const std::string bytes = ss.str();
  REQUIRE(bytes.size() == 9 + 4 * 3 + 8 * t.words().size());
  CHECK(bytes.substr(0, 4) == "APBT");
  CHECK(static_cast<unsigned char>(bytes[4]) == 1);
  CHECK(static_cast<unsigned char>(bytes[5]) == 0);
  CHECK(static_cast<unsigned char>(bytes[6]) == 0);  // encoding
  CHECK(static_cast<unsigned char>(bytes[7]) == 3);  // bits
  CHECK(static_cast<unsigned char>(bytes[8]) == 3);  // rank
  CHECK(static_cast<unsigned char>(bytes[9 + 8]) == 70);
  // First plane word, little-endian.
  Word w0 = 0;
  for (int i = 0; i < 8; ++i) w0 |= Word{static_cast<unsigned char>(bytes[21 + i])} << (8 * i);
  CHECK(w0 == t.words()[0]);

  std::stringstream in(bytes);
  CHECK(read_bpt(in) == t);

  const auto pm = decompose(oracle::random_values({2, 9}, 1, Encoding::PlusMinusOne, rng), 1, Encoding::PlusMinusOne);
  std::stringstream ss2;
  write_bpt(ss2, pm);
  CHECK(read_bpt(ss2) == pm);
}

TEST_CASE(".bpt rejects malformed input") {
  std::stringstream bad("XXXX");
  CHECK(code_of([&] { read_bpt(bad); }) == ErrorCode::IoError);

  const auto t = decompose(mat(1, 3, {1, 0, 1}), 1, Encoding::ZeroOne);
  std::stringstream ss;
  write_bpt(ss, t);
  std::string bytes = ss.str();

  std::stringstream truncated(bytes.substr(0, bytes.size() - 1));
  CHECK(code_of([&] { read_bpt(truncated); }) == ErrorCode::IoError);

  std::string corrupt = bytes;
  corrupt.back() = static_cast<char>(0x80);  // bit 63 of a 3-wide row
  std::stringstream cs(corrupt);
  CHECK(code_of([&] { read_bpt(cs); }) == ErrorCode::CorruptPadding);

  std::string bad_bits = bytes;
  bad_bits[7] = 9;
  std::stringstream bs(bad_bits);
  CHECK(code_of([&] { read_bpt(bs); }) == ErrorCode::ValueOutOfRange);

  CHECK(code_of([] { load_bpt("/nonexistent/dir/x.bpt"); }) == ErrorCode::IoError);
  try {
    load_bpt("/nonexistent/dir/x.bpt");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("/nonexistent/dir/x.bpt") != std::string::npos);
  }
}

TEST_CASE("save/load through the filesystem") {
  const auto path = std::filesystem::temp_directory_path() / "apbit_test_roundtrip.bpt";
  const auto t = decompose(mat(2, 2, {0, 1, 2, 3}), 2, Encoding::ZeroOne);
  save_bpt(path, t);
  CHECK(load_bpt(path) == t);
  std::filesystem::remove(path);
}

TEST_CASE("error codes have names") {
  CHECK(to_string(ErrorCode::CorruptPadding) == "CorruptPadding");
  CHECK(to_string(ErrorCode::ParseError) == "ParseError");
  CHECK(parse_encoding("01") == Encoding::ZeroOne);
  CHECK(parse_encoding("pm1") == Encoding::PlusMinusOne);
  CHECK(code_of([] { parse_encoding("x"); }) == ErrorCode::BadEncoding);
}
