#pragma once

// Scalar reference implementations used as test oracles. Nothing here calls
// into the packed kernels; everything works on plain integer values.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "apbit/apnn.hpp"
#include "apbit/bitplane.hpp"
#include "apbit/epilogue.hpp"

namespace oracle {

using apbit::Encoding;
using apbit::IntTensor;
using apbit::Shape;

inline std::int32_t encoded_value(int stored, Encoding e) { return e == Encoding::PlusMinusOne ? 2 * stored - 1 : stored; }

// Uniform values in the legal range of (bits, encoding).
inline IntTensor random_values(const Shape& dims, int bits, Encoding enc, std::mt19937_64& rng) {
  IntTensor t(dims);
  if (enc == Encoding::PlusMinusOne) {
    std::bernoulli_distribution b(0.5);
    for (auto& v : t.values()) v = b(rng) ? 1 : -1;
  } else {
    std::uniform_int_distribution<int> d(0, (1 << bits) - 1);
    for (auto& v : t.values()) v = d(rng);
  }
  return t;
}

// Y[i][j] = sum_k a[i][k] * b[j][k]; a is M x K, b is N x K.
inline IntTensor gemm(const IntTensor& a, const IntTensor& b) {
  const std::size_t m = a.dims()[0], k = a.dims()[1], n = b.dims()[0];
  IntTensor y({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      std::int64_t acc = 0;
      for (std::size_t kk = 0; kk < k; ++kk) acc += std::int64_t{a[i * k + kk]} * b[j * k + kk];
      y.at(i, j) = static_cast<std::int32_t>(acc);
    }
  }
  return y;
}

struct ConvGeom {
  std::size_t batch, cin, h, w, cout, k, stride, pad;
  std::size_t oh() const { return (h + 2 * pad - k) / stride + 1; }
  std::size_t ow() const { return (w + 2 * pad - k) / stride + 1; }
};

// x: NHWC values, w: {C_out, K, K, C_in} values. Out-of-frame taps are zero.
// Output NHWC {N, OH, OW, C_out}.
inline IntTensor conv(const IntTensor& x, const IntTensor& w, const ConvGeom& g) {
  IntTensor y({g.batch, g.oh(), g.ow(), g.cout});
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t oy = 0; oy < g.oh(); ++oy)
      for (std::size_t ox = 0; ox < g.ow(); ++ox)
        for (std::size_t o = 0; o < g.cout; ++o) {
          std::int64_t acc = 0;
          for (std::size_t kh = 0; kh < g.k; ++kh)
            for (std::size_t kw = 0; kw < g.k; ++kw) {
              const long iy = static_cast<long>(oy * g.stride + kh) - static_cast<long>(g.pad);
              const long ix = static_cast<long>(ox * g.stride + kw) - static_cast<long>(g.pad);
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(g.h) || ix >= static_cast<long>(g.w)) continue;
              for (std::size_t c = 0; c < g.cin; ++c) {
                acc += std::int64_t{x[((n * g.h + iy) * g.w + ix) * g.cin + c]} *
                       w[((o * g.k + kh) * g.k + kw) * g.cin + c];
              }
            }
          y[((n * g.oh() + oy) * g.ow() + ox) * g.cout + o] = static_cast<std::int32_t>(acc);
        }
  return y;
}

// NCHW <-> NHWC value reshuffles.
inline IntTensor nhwc_to_nchw(const IntTensor& x) {
  const auto& d = x.dims();
  IntTensor out({d[0], d[3], d[1], d[2]});
  for (std::size_t n = 0; n < d[0]; ++n)
    for (std::size_t y = 0; y < d[1]; ++y)
      for (std::size_t xx = 0; xx < d[2]; ++xx)
        for (std::size_t c = 0; c < d[3]; ++c)
          out[((n * d[3] + c) * d[1] + y) * d[2] + xx] = x[((n * d[1] + y) * d[2] + xx) * d[3] + c];
  return out;
}

// OIHW -> {O, K, K, I}
inline IntTensor oihw_to_okki(const IntTensor& w) {
  const auto& d = w.dims();
  IntTensor out({d[0], d[2], d[3], d[1]});
  for (std::size_t o = 0; o < d[0]; ++o)
    for (std::size_t i = 0; i < d[1]; ++i)
      for (std::size_t kh = 0; kh < d[2]; ++kh)
        for (std::size_t kw = 0; kw < d[3]; ++kw)
          out[((o * d[2] + kh) * d[3] + kw) * d[1] + i] = w[((o * d[1] + i) * d[2] + kh) * d[3] + kw];
  return out;
}

// The separate-pass epilogue: each stage materializes a full tensor before
// the next starts. y is {batch, H, W, C} (or {rows, C} with H = 1, W = rows).
inline std::vector<std::int32_t> epilogue(const std::vector<std::int32_t>& y, std::size_t batch, std::size_t h,
                                          std::size_t w, std::size_t c, const apbit::EpilogueSpec& spec) {
  std::vector<double> v(y.begin(), y.end());
  if (spec.bn) {
    const auto& bn = *spec.bn;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const std::size_t ch = i % c;
      v[i] = (static_cast<double>(y[i]) - bn.mean[ch]) / std::sqrt(bn.var[ch] + bn.eps) * bn.gamma[ch] + bn.beta[ch];
    }
  }
  if (spec.relu)
    for (auto& e : v) e = e > 0.0 ? e : 0.0;
  if (spec.pool) {
    const std::size_t k = static_cast<std::size_t>(spec.pool->size);
    const std::size_t ph = h / k, pw = w / k;
    std::vector<double> out(batch * ph * pw * c);
    for (std::size_t n = 0; n < batch; ++n)
      for (std::size_t py = 0; py < ph; ++py)
        for (std::size_t px = 0; px < pw; ++px)
          for (std::size_t ch = 0; ch < c; ++ch) {
            double sum = 0.0, mx = -1e300;
            for (std::size_t dy = 0; dy < k; ++dy)
              for (std::size_t dx = 0; dx < k; ++dx) {
                const double e = v[((n * h + py * k + dy) * w + px * k + dx) * c + ch];
                sum += e;
                mx = std::max(mx, e);
              }
            out[((n * ph + py) * pw + px) * c + ch] =
                spec.pool->kind == apbit::PoolKind::Max ? mx : std::floor(sum / static_cast<double>(k * k));
          }
    v = std::move(out);
  }
  std::vector<std::int32_t> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (spec.quantize) {
      const auto& q = *spec.quantize;
      const double level = std::floor((v[i] - q.zero_point) / q.scale);
      r[i] = static_cast<std::int32_t>(std::clamp(level, 0.0, static_cast<double>((1 << q.bits) - 1)));
    } else {
      r[i] = static_cast<std::int32_t>(std::floor(v[i]));
    }
  }
  return r;
}

// Value-domain reference of a whole network: every layer materializes its
// int32 output and runs the separate epilogue passes.
inline IntTensor model(const apbit::ModelGraph& g, const IntTensor& image) {
  const auto& in = g.input();
  IntTensor cur = image;
  if (in.dims.size() == 4 && in.layout == apbit::LayoutTag::NCHW) {
    const auto& d = image.dims();
    IntTensor t({d[0], d[2], d[3], d[1]});
    for (std::size_t n = 0; n < d[0]; ++n)
      for (std::size_t c = 0; c < d[1]; ++c)
        for (std::size_t y = 0; y < d[2]; ++y)
          for (std::size_t x = 0; x < d[3]; ++x)
            t[((n * d[2] + y) * d[3] + x) * d[1] + c] = image[((n * d[1] + c) * d[2] + y) * d[3] + x];
    cur = t;
  }
  if (in.quantize) {
    apbit::EpilogueSpec q;
    q.quantize = in.quantize;
    const std::vector<std::int32_t> src(cur.values().begin(), cur.values().end());
    cur = IntTensor(cur.dims(), epilogue(src, 1, 1, src.size(), 1, q));
  }

  const auto& layers = g.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& L = layers[i];
    // Levels -> values in this layer's activation encoding.
    IntTensor x = cur;
    if (L.in_encoding == Encoding::PlusMinusOne)
      for (auto& v : x.values()) v = 2 * v - 1;
    const IntTensor w = apbit::reconstruct(g.weights(i));

    std::vector<std::int32_t> out;
    if (L.spec.kind == apbit::LayerKind::Conv) {
      const ConvGeom geo{L.conv.batch, L.conv.in_channels, L.conv.height, L.conv.width,
                         L.conv.out_channels, L.conv.kernel, L.conv.stride, L.conv.pad};
      const IntTensor y = conv(x, w, geo);
      out = epilogue(std::vector<std::int32_t>(y.values().begin(), y.values().end()), geo.batch, geo.oh(), geo.ow(),
                     geo.cout, L.spec.epilogue);
    } else {
      const IntTensor flat({L.batch, L.in_features}, std::vector<std::int32_t>(x.values().begin(), x.values().end()));
      const IntTensor y = gemm(flat, w);
      out = epilogue(std::vector<std::int32_t>(y.values().begin(), y.values().end()), 1, 1, L.batch,
                     L.spec.out_features, L.spec.epilogue);
    }
    cur = IntTensor(L.out_dims, std::move(out));
  }
  return cur;
}

}  // namespace oracle
