#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "apbit/apconv.hpp"
#include "apbit/bitplane.hpp"
#include "apbit/tuner.hpp"
#include "report.hpp"

namespace apbit::cli {

struct Case {
  int p = 1;
  int q = 1;
  bool operator==(const Case&) const = default;
};

struct Mnk {
  std::size_t m = 0, n = 0, k = 0;
  bool operator==(const Mnk&) const = default;
};

// Parsers for the flag syntax; all throw Error(ParseError).
Case parse_case(std::string_view s);  // "w2a8"
std::string case_name(const Case& c);
Mnk parse_mnk(std::string_view s);    // "64,1024,1024"
ConvShape parse_conv(std::string_view s);  // "BS,Cin,H,W,Cout,K,stride,pad"
std::string conv_name(const ConvShape& s);

enum class EncodingFilter { All, ZeroOne, PlusMinusOne, Mixed };
EncodingFilter parse_encoding_filter(std::string_view s);  // all | 01 | pm1 | mixed

struct EncodingPair {
  Encoding w = Encoding::ZeroOne;
  Encoding x = Encoding::ZeroOne;
  std::string name() const;
};

// Legal (weight, feature) encodings at the given widths; +-1 needs 1 bit.
// Convolution additionally excludes 0/1 weights over +-1 features.
std::vector<EncodingPair> matmul_pairs(int p, int q, EncodingFilter f);
std::vector<EncodingPair> conv_pairs(int p, int q, EncodingFilter f);

// Acceptance grids.
std::vector<Case> default_matmul_cases();  // [1,8]^2
std::vector<Mnk> default_matmul_shapes();  // M,N in {8,64,128}, K in {128,512}
std::vector<Case> default_conv_cases();    // [1,4]^2 + w1a8, w2a8

struct VerifyOptions {
  std::vector<Case> cases;  // empty: default grid
  std::vector<Mnk> mnk;
  std::vector<ConvShape> convs;
  EncodingFilter encoding = EncodingFilter::All;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  int conv_samples = 12;  // random shapes per conv case and encoding
  int graphs = 50;        // random networks, fused vs unfused vs oracle
  bool corrupt_bit = false;
  bool verbose = false;
};

struct VerifyOutcome {
  Report report;
  std::optional<std::string> first_failure;
};

VerifyOutcome run_verify(const VerifyOptions& o, std::ostream& log);

struct BenchOptions {
  std::vector<Case> cases;  // default w1a1
  std::vector<Mnk> mnk;     // default 1024^3
  std::vector<ConvShape> convs;
  EncodingFilter encoding = EncodingFilter::ZeroOne;
  int runs = 200;
  int warmup = 10;
  int ref_runs = 3;  // the scalar reference is slow; timed separately
  bool reference = true;
  std::optional<std::filesystem::path> model;
  std::optional<std::filesystem::path> image;
  std::optional<std::filesystem::path> profile;
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

Report run_bench(const BenchOptions& o, std::ostream& log);

struct ModelRunOptions {
  std::filesystem::path model;
  std::filesystem::path image;
  bool fusion = true;
  unsigned threads = 1;
  std::optional<std::filesystem::path> profile;
  std::optional<std::filesystem::path> expect;      // golden logits
  std::optional<std::filesystem::path> logits_out;
};

struct ModelRunOutcome {
  Report report;
  IntTensor logits;
  bool golden_match = true;
};

ModelRunOutcome run_model_command(const ModelRunOptions& o, std::ostream& log);

// Logits as text: one line per batch row, values separated by spaces.
std::string format_logits(const IntTensor& logits);
IntTensor parse_logits(const std::string& text, const Shape& dims);

// Loads the profile at `path`, measuring and saving one first if absent.
SwitchProfile obtain_profile(const std::filesystem::path& path, std::ostream& log);

}  // namespace apbit::cli
