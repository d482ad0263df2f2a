#include "apbit/epilogue.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "apbit/error.hpp"

namespace apbit {

void EpilogueSpec::validate(std::size_t channels) const {
  if (bn) {
    const std::size_t n = bn->gamma.size();
    if (bn->beta.size() != n || bn->mean.size() != n || bn->var.size() != n) {
      throw Error(ErrorCode::ShapeMismatch, "batch-norm parameter vectors differ in length");
    }
    if (n != channels) {
      throw Error(ErrorCode::ShapeMismatch, "batch-norm has " + std::to_string(n) +
                                                " channels, output has " + std::to_string(channels));
    }
    for (std::size_t c = 0; c < n; ++c) {
      if (!(bn->var[c] + bn->eps > 0.0)) {
        throw Error(ErrorCode::ValueOutOfRange, "batch-norm var + eps must be positive");
      }
    }
  }
  if (pool && (pool->size < 1)) {
    throw Error(ErrorCode::ValueOutOfRange, "pool size must be positive");
  }
  if (quantize) {
    if (!(quantize->scale > 0.0)) throw Error(ErrorCode::QuantRangeError, "scale must be > 0");
    if (quantize->bits < 1 || quantize->bits > 8) {
      throw Error(ErrorCode::QuantRangeError, "output bits must be in [1,8]");
    }
  }
}

std::string EpilogueSpec::describe() const {
  std::ostringstream os;
  const char* sep = "";
  if (bn) { os << sep << "bn"; sep = "+"; }
  if (relu) { os << sep << "relu"; sep = "+"; }
  if (pool) {
    os << sep << (pool->kind == PoolKind::Avg ? "avgpool" : "maxpool") << pool->size;
    sep = "+";
  }
  if (quantize) { os << sep << "quant" << quantize->bits; sep = "+"; }
  if (empty()) os << "none";
  return os.str();
}

double bn_apply(std::int32_t x, double gamma, double beta, double mean, double var, double eps) {
  return (static_cast<double>(x) - mean) / std::sqrt(var + eps) * gamma + beta;
}

double apply_pointwise(const EpilogueSpec& spec, std::int32_t x, std::size_t channel) {
  double v = static_cast<double>(x);
  if (spec.bn) {
    const auto& bn = *spec.bn;
    v = bn_apply(x, bn.gamma[channel], bn.beta[channel], bn.mean[channel], bn.var[channel], bn.eps);
  }
  if (spec.relu) v = std::max(v, 0.0);
  return v;
}

double pool_reduce(std::span<const double> window, PoolKind kind) {
  if (kind == PoolKind::Max) return *std::max_element(window.begin(), window.end());
  double sum = 0.0;
  for (double v : window) sum += v;
  return std::floor(sum / static_cast<double>(window.size()));
}

std::int32_t quantize_value(double v, const Quantize& q) {
  const double level = std::floor((v - static_cast<double>(q.zero_point)) / q.scale);
  return static_cast<std::int32_t>(std::clamp(level, 0.0, static_cast<double>(q.max_level())));
}

std::int32_t finalize_value(const EpilogueSpec& spec, double v) {
  if (spec.quantize) return quantize_value(v, *spec.quantize);
  constexpr double lo = std::numeric_limits<std::int32_t>::min();
  constexpr double hi = std::numeric_limits<std::int32_t>::max();
  return static_cast<std::int32_t>(std::clamp(std::floor(v), lo, hi));
}

std::int32_t fused_epilogue(std::int32_t x, const EpilogueSpec& spec, std::size_t channel) {
  if (spec.pool) {
    throw Error(ErrorCode::UnsupportedLayer, "scalar epilogue cannot pool; use fused_epilogue_tile");
  }
  return finalize_value(spec, apply_pointwise(spec, x, channel));
}

std::vector<std::int32_t> fused_epilogue_tile(std::span<const std::int32_t> tile, std::size_t height,
                                              std::size_t width, std::size_t channels,
                                              const EpilogueSpec& spec) {
  if (tile.size() != height * width * channels) {
    throw Error(ErrorCode::ShapeMismatch, "epilogue tile size does not match H*W*C");
  }
  if (!spec.pool) {
    std::vector<std::int32_t> out(tile.size());
    for (std::size_t i = 0; i < tile.size(); ++i) {
      out[i] = finalize_value(spec, apply_pointwise(spec, tile[i], i % channels));
    }
    return out;
  }
  const std::size_t k = static_cast<std::size_t>(spec.pool->size);
  const std::size_t oh = height / k;
  const std::size_t ow = width / k;
  std::vector<std::int32_t> out(oh * ow * channels);
  std::vector<double> window(k * k);
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      for (std::size_t c = 0; c < channels; ++c) {
        std::size_t n = 0;
        for (std::size_t dy = 0; dy < k; ++dy) {
          for (std::size_t dx = 0; dx < k; ++dx) {
            const std::size_t idx = ((y * k + dy) * width + (x * k + dx)) * channels + c;
            window[n++] = apply_pointwise(spec, tile[idx], c);
          }
        }
        out[(y * ow + x) * channels + c] = finalize_value(spec, pool_reduce(window, spec.pool->kind));
      }
    }
  }
  return out;
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

}  // namespace apbit
