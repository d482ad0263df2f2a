#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace apbit {

// Per-channel batch normalization parameters.
struct BatchNorm {
  std::vector<double> gamma;
  std::vector<double> beta;
  std::vector<double> mean;
  std::vector<double> var;
  double eps = 1e-5;

  std::size_t channels() const { return gamma.size(); }
};

enum class PoolKind { Avg, Max };

struct Pool {
  PoolKind kind = PoolKind::Max;
  int size = 2;  // k x k window, stride k
};

// y = floor((x - zero_point) / scale), clamped to [0, 2^bits - 1].
struct Quantize {
  std::int32_t zero_point = 0;
  double scale = 1.0;
  int bits = 2;

  std::int32_t max_level() const { return (std::int32_t{1} << bits) - 1; }
};

// Element-wise chain applied to 32-bit accumulators. Stages run in the fixed
// order BN -> ReLU -> Pool -> Quantize; absent stages are skipped. Values are
// carried in double between stages and rounded only by the final floor.
struct EpilogueSpec {
  std::optional<BatchNorm> bn;
  bool relu = false;
  std::optional<Pool> pool;
  std::optional<Quantize> quantize;

  bool empty() const { return !bn && !relu && !pool && !quantize; }
  // Throws QuantRangeError / ShapeMismatch for malformed parameters.
  void validate(std::size_t channels) const;
  std::string describe() const;
};

// (x - mean) / sqrt(var + eps) * gamma + beta
double bn_apply(std::int32_t x, double gamma, double beta, double mean, double var, double eps);

// BN then ReLU for one value of the given channel.
double apply_pointwise(const EpilogueSpec& spec, std::int32_t x, std::size_t channel);

// Reduces one pooling window. Avg floors the mean.
double pool_reduce(std::span<const double> window, PoolKind kind);

std::int32_t quantize_value(double v, const Quantize& q);

// Last stage: quantize when present, else floor to int32.
std::int32_t finalize_value(const EpilogueSpec& spec, double v);

// Whole chain on one scalar; spec must not contain a pooling stage.
std::int32_t fused_epilogue(std::int32_t x, const EpilogueSpec& spec, std::size_t channel = 0);

// Whole chain on an H x W x C tile (channel innermost). Output is
// (H/k) x (W/k) x C when pooling, else H x W x C.
std::vector<std::int32_t> fused_epilogue_tile(std::span<const std::int32_t> tile, std::size_t height,
                                              std::size_t width, std::size_t channels,
                                              const EpilogueSpec& spec);

// Integer floor division (toward negative infinity).
std::int64_t floor_div(std::int64_t a, std::int64_t b);

}  // namespace apbit
