#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "apbit/tile_config.hpp"

namespace apbit {

// Exact non-negative rational, always reduced.
class Rational {
 public:
  Rational() = default;
  Rational(std::uint64_t num, std::uint64_t den);

  std::uint64_t num() const { return num_; }
  std::uint64_t den() const { return den_; }
  double to_double() const { return static_cast<double>(num_) / static_cast<double>(den_); }
  std::string to_string() const;

  friend bool operator==(const Rational& a, const Rational& b) = default;
  friend std::strong_ordering operator<=>(const Rational& a, const Rational& b);

 private:
  std::uint64_t num_ = 0;
  std::uint64_t den_ = 1;
};

struct PerfEstimate {
  Rational tlp;  // (p*M * q*N) / (b_m * b_n)
  Rational ci;   // (2 * b_m * b_n) / (b_m + b_n)
  TileConfig cfg;
};

PerfEstimate estimate(std::size_t m, std::size_t n, std::size_t k, int p, int q, const TileConfig& cfg);

inline constexpr double kDefaultTlpThreshold = 64.0;

struct SwitchProfile {
  double r4 = 2.5;  // 1-bit path throughput / int4 stand-in throughput
  double r8 = 6.0;  // 1-bit path throughput / int8 stand-in throughput
  double t = kDefaultTlpThreshold;
  std::string host;
  std::string timestamp;

  void validate() const;  // throws ValueOutOfRange
};

// Picks (b_m, b_n) from {16,32,64,128}^2 at b_k = 128: highest TLP first;
// if even that is below the threshold keep it, otherwise the best CI among
// configs whose TLP reaches the threshold. Ties: larger CI, then larger b_m,
// then larger b_n.
TileConfig autotune(std::size_t m, std::size_t n, std::size_t k, int p, int q,
                    const SwitchProfile& profile = {});

enum class ComputePath { Emulate, NativeInt4, NativeInt8 };

std::string_view to_string(ComputePath path);

// R(p,q) = R4 when p <= 4 and q <= 4, else R8. Emulate when p*q < R(p,q) or
// the TLP is under the threshold; otherwise the matching native stand-in.
ComputePath choose_path(int p, int q, const Rational& tlp, const SwitchProfile& profile);
ComputePath choose_path(int p, int q, double tlp, const SwitchProfile& profile);

// Profile persistence: text lines "r4=", "r8=", "t=", "host=", "timestamp=".
SwitchProfile load_profile(const std::filesystem::path& path);
void save_profile(const std::filesystem::path& path, const SwitchProfile& profile);

// APBIT_PROFILE if set, else $HOME/.apbit_profile (or ./apbit_profile).
std::filesystem::path default_profile_path();

struct ProfileRun {
  SwitchProfile profile;
  std::optional<SwitchProfile> previous;
  bool stable = true;  // ratios within 25% of the previous profile (or none)
};

// Measures R4/R8 with micro-benchmarks at the given square sizes and
// persists the profile. The int4/int8 stand-ins are the reference integer
// GEMM on inputs clamped to the respective range.
ProfileRun profile_switch(const std::vector<std::size_t>& bench_sizes, const std::filesystem::path& path,
                          double tlp_threshold = kDefaultTlpThreshold);

}  // namespace apbit
