#pragma once

// Random small networks for fused-vs-unfused and oracle comparisons.

#include <random>
#include <vector>

#include "apbit/apnn.hpp"
#include "oracle.hpp"

namespace testgen {

struct RandomModel {
  apbit::ModelGraph graph;
  apbit::IntTensor image;
};

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int pick(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

inline bool coin(std::mt19937_64& rng, double p = 0.5) { return std::bernoulli_distribution(p)(rng); }

inline apbit::BatchNorm random_bn(std::size_t channels, double scale, std::mt19937_64& rng) {
  apbit::BatchNorm bn;
  for (std::size_t c = 0; c < channels; ++c) {
    bn.gamma.push_back(uniform(rng, -2.0, 2.0));
    bn.beta.push_back(uniform(rng, -4.0, 4.0));
    bn.mean.push_back(uniform(rng, -scale, scale));
    bn.var.push_back(uniform(rng, 0.25, 4.0) * scale * scale + 0.01);
  }
  return bn;
}

// Quantizer spreading values of typical magnitude `spread` over 2^bits levels.
inline apbit::Quantize random_quant(int bits, double spread, std::mt19937_64& rng) {
  apbit::Quantize q;
  q.bits = bits;
  q.zero_point = pick(rng, -3, 3);
  q.scale = std::max(0.25, spread / (1 << bits) * uniform(rng, 0.5, 1.5));
  return q;
}

// Up to `max_layers` compute layers (convs, then FCs, then the output layer);
// pooling is merged into convs.
inline RandomModel random_model(std::mt19937_64& rng, int max_layers = 5) {
  using apbit::Encoding;
  using apbit::LayerKind;
  const int total = pick(rng, 1, max_layers);
  const int convs = total > 1 ? pick(rng, 0, std::min(3, total - 1)) : 0;

  apbit::InputSpec input;
  const std::size_t batch = static_cast<std::size_t>(pick(rng, 1, 2));
  const std::size_t h = static_cast<std::size_t>(pick(rng, 4, 8));
  const std::size_t w = static_cast<std::size_t>(pick(rng, 4, 8));
  const std::size_t c = static_cast<std::size_t>(pick(rng, 1, 6));
  const bool image_4d = convs > 0 || coin(rng);
  input.dims = image_4d ? apbit::Shape{batch, h, w, c} : apbit::Shape{batch, h * w * c};
  input.layout = image_4d && coin(rng, 0.3) ? apbit::LayoutTag::NCHW : apbit::LayoutTag::NHWC;
  if (image_4d && input.layout == apbit::LayoutTag::NCHW) input.dims = {batch, c, h, w};
  int cur_bits = 8;
  if (coin(rng, 0.8)) {
    input.quantize = random_quant(pick(rng, 1, 4), 256.0, rng);
    cur_bits = input.quantize->bits;
  }

  std::vector<apbit::LayerSpec> layers;
  std::vector<apbit::BitPlaneTensor> weights;
  std::size_t ch = c, hh = h, ww = w;
  std::size_t features = h * w * c;
  for (int i = 0; i < total; ++i) {
    apbit::LayerSpec l;
    const bool last = i + 1 == total;
    l.kind = i < convs ? LayerKind::Conv : (last ? LayerKind::Output : LayerKind::FullyConnected);
    l.name = "l" + std::to_string(i);

    l.act_encoding = cur_bits == 1 && coin(rng, 0.4) ? Encoding::PlusMinusOne : Encoding::ZeroOne;
    // 0/1 weights over +-1 features have no conv padding rule.
    const bool needs_pm1_w = l.kind == LayerKind::Conv && l.act_encoding == Encoding::PlusMinusOne;
    if (needs_pm1_w || coin(rng, 0.35)) {
      l.weight_encoding = Encoding::PlusMinusOne;
      l.weight_bits = 1;
    } else {
      l.weight_encoding = Encoding::ZeroOne;
      l.weight_bits = pick(rng, 1, 4);
    }
    const double wmax = l.weight_encoding == Encoding::PlusMinusOne ? 1.0 : (1 << l.weight_bits) - 1;
    const double xmax = l.act_encoding == Encoding::PlusMinusOne ? 1.0 : (1 << cur_bits) - 1;

    std::size_t out_ch, fan_in;
    apbit::Shape wdims;
    if (l.kind == LayerKind::Conv) {
      l.out_channels = static_cast<std::size_t>(pick(rng, 2, 8));
      l.kernel = static_cast<std::size_t>(coin(rng) ? 3 : 1);
      l.kernel = std::min<std::size_t>(l.kernel, std::min(hh, ww));
      l.stride = static_cast<std::size_t>(coin(rng, 0.25) ? 2 : 1);
      l.pad = l.kernel == 3 && coin(rng) ? 1 : 0;
      out_ch = l.out_channels;
      fan_in = l.kernel * l.kernel * ch;
      wdims = {l.out_channels, l.kernel, l.kernel, ch};
    } else {
      l.out_features = static_cast<std::size_t>(pick(rng, 2, 12));
      out_ch = l.out_features;
      fan_in = features;
      wdims = {l.out_features, features};
    }
    const double spread = std::sqrt(static_cast<double>(fan_in)) * (wmax * xmax / 2.0 + 1.0);

    if (coin(rng)) l.epilogue.bn = random_bn(out_ch, spread, rng);
    l.epilogue.relu = coin(rng);
    if (!last) {
      const int next_bits = pick(rng, 1, 4);
      l.epilogue.quantize = random_quant(next_bits, l.epilogue.bn ? 4.0 : spread, rng);
    }

    std::size_t oh = 0, ow = 0;
    if (l.kind == LayerKind::Conv) {
      oh = (hh + 2 * l.pad - l.kernel) / l.stride + 1;
      ow = (ww + 2 * l.pad - l.kernel) / l.stride + 1;
    }
    weights.push_back(apbit::decompose(oracle::random_values(wdims, l.weight_bits, l.weight_encoding, rng),
                                       l.weight_bits, l.weight_encoding));
    layers.push_back(l);

    if (l.kind == LayerKind::Conv) {
      if (oh >= 2 && ow >= 2 && coin(rng, 0.4)) {
        apbit::LayerSpec pool;
        pool.kind = LayerKind::Pool;
        pool.name = "pool" + std::to_string(i);
        pool.pool = apbit::Pool{coin(rng) ? apbit::PoolKind::Max : apbit::PoolKind::Avg, 2};
        layers.push_back(pool);
        oh /= 2;
        ow /= 2;
      }
      hh = oh;
      ww = ow;
      ch = l.out_channels;
      features = hh * ww * ch;
    } else {
      features = l.out_features;
    }
    if (!last) cur_bits = l.epilogue.quantize->bits;
  }

  apbit::IntTensor image(input.dims);
  std::uniform_int_distribution<int> px(0, 255);
  for (auto& v : image.values()) v = px(rng);
  return RandomModel{apbit::ModelGraph::build(std::move(input), std::move(layers), std::move(weights)),
                     std::move(image)};
}

}  // namespace testgen
