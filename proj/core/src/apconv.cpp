#include "apbit/apconv.hpp"

#include <algorithm>
#include <atomic>
#include <cassert>
#include <cstdint>
#include <sstream>

#include "blocked_bmma.hpp"

namespace apbit {

std::string_view to_string(LayoutTag t) {
  switch (t) {
    case LayoutTag::NCHW: return "nchw";
    case LayoutTag::NHWC: return "nhwc";
    case LayoutTag::NPHWC: return "nphwc";
  }
  return "?";
}

LayoutTag parse_layout(std::string_view s) {
  if (s == "nchw" || s == "NCHW") return LayoutTag::NCHW;
  if (s == "nhwc" || s == "NHWC") return LayoutTag::NHWC;
  if (s == "nphwc" || s == "NPHWC") return LayoutTag::NPHWC;
  throw Error(ErrorCode::BadLayoutTag, "unknown layout '" + std::string(s) + "'");
}

std::string_view to_string(PaddingStrategy s) {
  switch (s) {
    case PaddingStrategy::ZeroPad: return "ZeroPad";
    case PaddingStrategy::OnePadWithCounter: return "OnePadWithCounter";
    case PaddingStrategy::ZeroPadSignedWeights: return "ZeroPadSignedWeights";
  }
  return "?";
}

void ConvShape::validate() const {
  if (batch == 0 || in_channels == 0 || height == 0 || width == 0 || out_channels == 0 ||
      kernel == 0 || stride == 0) {
    throw Error(ErrorCode::ShapeMismatch, "conv extents must be positive: " + to_string());
  }
  if (height + 2 * pad < kernel || width + 2 * pad < kernel) {
    throw Error(ErrorCode::ShapeMismatch, "kernel larger than padded input: " + to_string());
  }
}

std::string ConvShape::to_string() const {
  std::ostringstream os;
  os << batch << "," << in_channels << "," << height << "," << width << "," << out_channels << ","
     << kernel << "," << stride << "," << pad;
  return os.str();
}

// ---------------------------------------------------------------------------
// ChannelMajorTensor

ChannelMajorTensor::ChannelMajorTensor(std::size_t batch, std::size_t height, std::size_t width,
                                       std::size_t channels, int bits, Encoding encoding)
    : batch_(batch), height_(height), width_(width), channels_(channels), bits_(bits),
      encoding_(encoding) {
  if (bits < 1 || bits > kMaxBits) throw Error(ErrorCode::ValueOutOfRange, "bits not in [1,8]");
  if (encoding == Encoding::PlusMinusOne && bits != 1) {
    throw Error(ErrorCode::BadEncoding, "PlusMinusOne requires 1 bit");
  }
  if (channels == 0) throw Error(ErrorCode::ShapeMismatch, "zero channels");
  words_per_run_ = detail::ceil_div(channels, kChannelQuantum) * (kChannelQuantum / kWordBits);
  words_.assign(batch * static_cast<std::size_t>(bits) * height * width * words_per_run_, 0);
}

std::size_t ChannelMajorTensor::offset(std::size_t n, int t, std::size_t y, std::size_t x) const {
  return (((n * static_cast<std::size_t>(bits_) + static_cast<std::size_t>(t)) * height_ + y) * width_ + x) *
         words_per_run_;
}

std::span<const Word> ChannelMajorTensor::run(std::size_t n, int t, std::size_t y, std::size_t x) const {
  return std::span<const Word>(words_).subspan(offset(n, t, y, x), words_per_run_);
}

std::span<Word> ChannelMajorTensor::mutable_run(std::size_t n, int t, std::size_t y, std::size_t x) {
  return std::span<Word>(words_).subspan(offset(n, t, y, x), words_per_run_);
}

bool ChannelMajorTensor::bit(std::size_t n, int t, std::size_t y, std::size_t x, std::size_t c) const {
  return (run(n, t, y, x)[c / kWordBits] >> (c % kWordBits)) & 1u;
}

ChannelMajorTensor ChannelMajorTensor::with_encoding(Encoding e) const {
  if (e == Encoding::PlusMinusOne && bits_ != 1) {
    throw Error(ErrorCode::BadEncoding, "PlusMinusOne requires 1 bit");
  }
  ChannelMajorTensor out = *this;
  out.encoding_ = e;
  return out;
}

BitPlaneTensor ChannelMajorTensor::to_bitplanes() const {
  BitPlaneTensor out({batch_, height_, width_, channels_}, bits_, encoding_);
  const std::size_t wpr = out.words_per_row();
  for (int t = 0; t < bits_; ++t) {
    for (std::size_t n = 0; n < batch_; ++n) {
      for (std::size_t y = 0; y < height_; ++y) {
        for (std::size_t x = 0; x < width_; ++x) {
          const auto src = run(n, t, y, x);
          auto dst = out.mutable_row(t, (n * height_ + y) * width_ + x);
          std::copy_n(src.begin(), wpr, dst.begin());
        }
      }
    }
  }
  return out;
}

ChannelMajorTensor ChannelMajorTensor::from_bitplanes(const BitPlaneTensor& t) {
  if (t.dims().size() != 4) {
    throw Error(ErrorCode::ShapeMismatch, "channel-major input must be rank 4 NHWC, got " +
                                              shape_string(t.dims()));
  }
  const auto& d = t.dims();
  ChannelMajorTensor out(d[0], d[1], d[2], d[3], t.bits(), t.encoding());
  for (int p = 0; p < t.bits(); ++p) {
    for (std::size_t n = 0; n < d[0]; ++n) {
      for (std::size_t y = 0; y < d[1]; ++y) {
        for (std::size_t x = 0; x < d[2]; ++x) {
          const auto src = t.row(p, (n * d[1] + y) * d[2] + x);
          std::copy(src.begin(), src.end(), out.mutable_run(n, p, y, x).begin());
        }
      }
    }
  }
  return out;
}

ChannelMajorTensor to_channel_major(const IntTensor& x, LayoutTag layout, int bits, Encoding encoding,
                                    OpCounter* ops) {
  if (layout == LayoutTag::NPHWC) {
    throw Error(ErrorCode::BadLayoutTag, "value tensors are NCHW or NHWC; NPHWC is the packed form");
  }
  if (x.dims().size() != 4) {
    throw Error(ErrorCode::ShapeMismatch, "expected a rank-4 tensor, got " + shape_string(x.dims()));
  }
  const auto& d = x.dims();
  const bool nchw = layout == LayoutTag::NCHW;
  const std::size_t n_ = d[0];
  const std::size_t c_ = nchw ? d[1] : d[3];
  const std::size_t h_ = nchw ? d[2] : d[1];
  const std::size_t w_ = nchw ? d[3] : d[2];
  ChannelMajorTensor out(n_, h_, w_, c_, bits, encoding);
  const std::int32_t hi = (1 << bits) - 1;

  for (std::size_t n = 0; n < n_; ++n) {
    for (std::size_t y = 0; y < h_; ++y) {
      for (std::size_t xx = 0; xx < w_; ++xx) {
        for (std::size_t c = 0; c < c_; ++c) {
          const std::size_t idx = nchw ? ((n * c_ + c) * h_ + y) * w_ + xx : ((n * h_ + y) * w_ + xx) * c_ + c;
          const std::int32_t v = x[idx];
          std::uint32_t stored;
          if (encoding == Encoding::PlusMinusOne) {
            if (v != 1 && v != -1) {
              throw Error(ErrorCode::ValueOutOfRange, "PlusMinusOne value " + std::to_string(v));
            }
            stored = v > 0 ? 1u : 0u;
          } else {
            if (v < 0 || v > hi) {
              throw Error(ErrorCode::ValueOutOfRange,
                          "value " + std::to_string(v) + " exceeds " + std::to_string(bits) + "-bit range");
            }
            stored = static_cast<std::uint32_t>(v);
          }
          for (int t = 0; t < bits; ++t) {
            if ((stored >> t) & 1u) out.mutable_run(n, t, y, xx)[c / kWordBits] |= Word{1} << (c % kWordBits);
          }
        }
      }
    }
  }
  if (ops) ops->add_decompose(static_cast<std::uint64_t>(x.size()) * bits);
  return out;
}

IntTensor from_channel_major(const ChannelMajorTensor& x) {
  IntTensor out({x.batch(), x.height(), x.width(), x.channels()});
  std::size_t i = 0;
  for (std::size_t n = 0; n < x.batch(); ++n) {
    for (std::size_t y = 0; y < x.height(); ++y) {
      for (std::size_t xx = 0; xx < x.width(); ++xx) {
        for (std::size_t c = 0; c < x.channels(); ++c) {
          std::int32_t v = 0;
          for (int t = 0; t < x.bits(); ++t) v |= static_cast<std::int32_t>(x.bit(n, t, y, xx, c)) << t;
          out[i++] = x.encoding() == Encoding::PlusMinusOne ? 2 * v - 1 : v;
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Padding

PaddingStrategy select_padding(Encoding w_enc, Encoding x_enc) {
  if (w_enc == Encoding::ZeroOne && x_enc == Encoding::ZeroOne) return PaddingStrategy::ZeroPad;
  if (w_enc == Encoding::PlusMinusOne && x_enc == Encoding::PlusMinusOne) {
    return PaddingStrategy::OnePadWithCounter;
  }
  if (w_enc == Encoding::PlusMinusOne && x_enc == Encoding::ZeroOne) {
    return PaddingStrategy::ZeroPadSignedWeights;
  }
  throw Error(ErrorCode::IllegalEncodingPair, "convolution does not support 0/1 weights with +-1 features");
}

namespace {

bool in_frame(std::size_t out_pos, std::size_t tap, const ConvShape& s, std::size_t extent,
              std::size_t* in_pos) {
  const std::ptrdiff_t v = static_cast<std::ptrdiff_t>(out_pos * s.stride + tap) -
                           static_cast<std::ptrdiff_t>(s.pad);
  if (v < 0 || v >= static_cast<std::ptrdiff_t>(extent)) return false;
  *in_pos = static_cast<std::size_t>(v);
  return true;
}

}  // namespace

PaddingPlan PaddingPlan::build(const ConvShape& shape, Encoding w_enc, Encoding x_enc) {
  PaddingPlan plan;
  plan.strategy = select_padding(w_enc, x_enc);
  if (plan.strategy != PaddingStrategy::OnePadWithCounter) return plan;
  const std::size_t oh = shape.out_height();
  const std::size_t ow = shape.out_width();
  plan.counter.assign(shape.batch * oh * ow, 0);
  for (std::size_t n = 0; n < shape.batch; ++n) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        std::uint32_t outside = 0;
        for (std::size_t kh = 0; kh < shape.kernel; ++kh) {
          for (std::size_t kw = 0; kw < shape.kernel; ++kw) {
            std::size_t iy, ix;
            if (!in_frame(y, kh, shape, shape.height, &iy) || !in_frame(x, kw, shape, shape.width, &ix)) {
              outside += static_cast<std::uint32_t>(shape.in_channels);
            }
          }
        }
        plan.counter[(n * oh + y) * ow + x] = outside;
      }
    }
  }
  return plan;
}

BitPlaneTensor pack_conv_weights(const IntTensor& oihw, int bits, Encoding encoding, OpCounter* ops) {
  if (oihw.dims().size() != 4 || oihw.dims()[2] != oihw.dims()[3]) {
    throw Error(ErrorCode::ShapeMismatch, "conv weights must be C_out x C_in x K x K, got " +
                                              shape_string(oihw.dims()));
  }
  const auto& d = oihw.dims();
  const std::size_t co = d[0], ci = d[1], k = d[2];
  IntTensor ohwi({co, k, k, ci});
  for (std::size_t o = 0; o < co; ++o) {
    for (std::size_t c = 0; c < ci; ++c) {
      for (std::size_t y = 0; y < k; ++y) {
        for (std::size_t x = 0; x < k; ++x) {
          ohwi[((o * k + y) * k + x) * ci + c] = oihw[((o * ci + c) * k + y) * k + x];
        }
      }
    }
  }
  return decompose(ohwi, bits, encoding, ops);
}

TrafficPlan im_traffic(const ConvShape& shape, int p, int q, const TileConfig& cfg) {
  cfg.validate();
  shape.validate();
  TrafficPlan plan;
  const std::size_t run_bits = detail::ceil_div(shape.in_channels, kChannelQuantum) * kChannelQuantum;
  plan.bytes_per_block_step =
      (static_cast<std::uint64_t>(cfg.b_m) * cfg.b_k + static_cast<std::uint64_t>(cfg.b_n) * cfg.b_k) / 8;
  plan.blocks_m = detail::ceil_div(static_cast<std::size_t>(p) * shape.out_channels, cfg.b_m);
  plan.blocks_n = detail::ceil_div(static_cast<std::size_t>(q) * shape.out_pixels(), cfg.b_n);
  plan.k_steps = shape.kernel * shape.kernel * detail::ceil_div(run_bits, cfg.b_k);
  plan.total_bytes = plan.bytes_per_block_step * plan.blocks_m * plan.blocks_n * plan.k_steps;
  return plan;
}

namespace {

void check_conv_operands(const BitPlaneTensor& w, const ChannelMajorTensor& x, const ConvShape& s,
                         const TileConfig& cfg) {
  cfg.validate();
  s.validate();
  const Shape expect_w{s.out_channels, s.kernel, s.kernel, s.in_channels};
  if (w.dims() != expect_w) {
    throw Error(ErrorCode::ShapeMismatch, "weights " + shape_string(w.dims()) + " do not match " +
                                              shape_string(expect_w) + " (C_out,K,K,C_in)");
  }
  if (x.batch() != s.batch || x.channels() != s.in_channels || x.height() != s.height ||
      x.width() != s.width) {
    throw Error(ErrorCode::ShapeMismatch, "features do not match conv shape " + s.to_string());
  }
}

// (pm1, pm1) padding: out-of-frame taps were computed against +1 features;
// subtract each such tap's weight sum so they contribute zero. The weight sum
// of a row is dot1(w, all-ones) under the XOR rule.
std::vector<std::int32_t> tap_weight_sums(const BitPlaneTensor& w, const ConvShape& s) {
  const std::size_t taps = s.kernel * s.kernel;
  std::vector<Word> ones(w.words_per_row(), ~Word{0});
  if (const std::size_t tail = s.in_channels % kWordBits; tail != 0) {
    ones.back() = (Word{1} << tail) - 1;
  }
  std::vector<std::int32_t> sums(s.out_channels * taps);
  for (std::size_t o = 0; o < s.out_channels; ++o) {
    for (std::size_t tap = 0; tap < taps; ++tap) {
      sums[o * taps + tap] = dot1(w.row(0, o * taps + tap), ones, s.in_channels, CaseKind::CaseII);
    }
  }
  return sums;
}

void apply_counter_correction(std::vector<std::int32_t>& y, const BitPlaneTensor& w, const ConvShape& s,
                              const PaddingPlan& plan) {
  const auto sums = tap_weight_sums(w, s);
  const std::size_t taps = s.kernel * s.kernel;
  const std::size_t oh = s.out_height(), ow = s.out_width();
  const std::size_t npix = s.out_pixels();
  for (std::size_t pix = 0; pix < npix; ++pix) {
    if (plan.counter[pix] == 0) continue;
    const std::size_t oy = (pix / ow) % oh;
    const std::size_t ox = pix % ow;
    for (std::size_t kh = 0; kh < s.kernel; ++kh) {
      for (std::size_t kw = 0; kw < s.kernel; ++kw) {
        std::size_t iy, ix;
        if (in_frame(oy, kh, s, s.height, &iy) && in_frame(ox, kw, s, s.width, &ix)) continue;
        for (std::size_t o = 0; o < s.out_channels; ++o) {
          y[o * npix + pix] -= sums[o * taps + kh * s.kernel + kw];
        }
      }
    }
  }
}

// Fills dst with stored-bit 1 for logical channels [first, C_in).
void fill_ones(std::span<Word> dst, std::size_t first_channel, std::size_t channels) {
  for (std::size_t i = 0; i < dst.size(); ++i) {
    const std::size_t lo = first_channel + i * kWordBits;
    if (lo >= channels) break;
    const std::size_t n = std::min<std::size_t>(kWordBits, channels - lo);
    dst[i] = n == kWordBits ? ~Word{0} : ((Word{1} << n) - 1);
  }
}

// Accumulates Y (C_out x pixels, output channel major) with the direct
// convolution loop nest over the blocked engine.
std::vector<std::int32_t> conv_accumulate(const BitPlaneTensor& w, const ChannelMajorTensor& x,
                                          const ConvShape& s, const TileConfig& cfg,
                                          const ExecContext& ctx) {
  check_conv_operands(w, x, s, cfg);
  const PaddingPlan plan = PaddingPlan::build(s, w.encoding(), x.encoding());
  const DotRule rule = select_rule(w.encoding(), x.encoding());
  const std::size_t p = static_cast<std::size_t>(w.bits());
  const std::size_t q = static_cast<std::size_t>(x.bits());
  const std::size_t taps = s.kernel * s.kernel;
  const std::size_t oh = s.out_height(), ow = s.out_width();
  const std::size_t npix = s.out_pixels();
  const std::size_t wps = static_cast<std::size_t>(cfg.b_k) / kWordBits;
  const std::size_t chunks = detail::ceil_div(x.words_per_run(), wps);
  const bool one_pad = plan.strategy == PaddingStrategy::OnePadWithCounter;

  std::vector<std::int32_t> y(s.out_channels * npix, 0);
  const bool concurrent = ctx.threads > 1;
  std::atomic<std::uint64_t> combined{0};

  auto load_run = [](std::span<const Word> src, std::size_t chunk, std::span<Word> dst) {
    const std::size_t begin = chunk * dst.size();
    if (begin >= src.size()) return;
    const Word* base = src.data() + begin;
    assert(reinterpret_cast<std::uintptr_t>(base) % alignof(Word) == 0);
    std::copy_n(base, std::min(dst.size(), src.size() - begin), dst.begin());
  };

  detail::run_blocked_bmma(
      detail::GemmGeometry{p * s.out_channels, q * npix, taps * chunks}, cfg, rule, ctx,
      [&](std::size_t r, std::size_t step, std::span<Word> dst) {
        load_run(w.row(static_cast<int>(r % p), (r / p) * taps + step / chunks), step % chunks, dst);
      },
      [&](std::size_t c, std::size_t step, std::span<Word> dst) {
        const std::size_t pix = c / q;
        const int t = static_cast<int>(c % q);
        const std::size_t tap = step / chunks;
        const std::size_t chunk = step % chunks;
        const std::size_t n = pix / (oh * ow);
        std::size_t iy, ix;
        if (in_frame((pix / ow) % oh, tap / s.kernel, s, s.height, &iy) &&
            in_frame(pix % ow, tap % s.kernel, s, s.width, &ix)) {
          load_run(x.run(n, t, iy, ix), chunk, dst);
        } else if (one_pad) {
          fill_ones(dst, chunk * static_cast<std::size_t>(cfg.b_k), s.in_channels);
        }
      },
      [&](std::size_t step, int sub) {
        const std::size_t first = (step % chunks) * static_cast<std::size_t>(cfg.b_k) +
                                  static_cast<std::size_t>(sub) * kTileBits;
        return first >= s.in_channels ? 0 : static_cast<int>(std::min<std::size_t>(kTileBits, s.in_channels - first));
      },
      [&](std::size_t row0, std::size_t col0, const std::int32_t* acc, std::size_t stride,
          std::size_t nrows, std::size_t ncols) {
        for (std::size_t rr = 0; rr < nrows; ++rr) {
          const std::size_t r = row0 + rr;
          const int sh = static_cast<int>(r % p);
          for (std::size_t cc = 0; cc < ncols; ++cc) {
            const std::size_t c = col0 + cc;
            const std::int32_t part =
                detail::checked_mul(acc[rr * stride + cc], std::int32_t{1} << (sh + static_cast<int>(c % q)));
            std::int32_t& dst = y[(r / p) * npix + c / q];
            if (concurrent) {
              std::atomic_ref<std::int32_t>(dst).fetch_add(part, std::memory_order_relaxed);
            } else {
              dst = detail::checked_add(dst, part);
            }
          }
        }
        combined.fetch_add(nrows * ncols, std::memory_order_relaxed);
      });

  if (ctx.ops) ctx.ops->add_combine(combined.load());
  if (one_pad) apply_counter_correction(y, w, s, plan);
  return y;
}

std::vector<std::int32_t> to_nhwc(const std::vector<std::int32_t>& y, const ConvShape& s) {
  const std::size_t npix = s.out_pixels();
  std::vector<std::int32_t> out(y.size());
  for (std::size_t pix = 0; pix < npix; ++pix) {
    for (std::size_t o = 0; o < s.out_channels; ++o) out[pix * s.out_channels + o] = y[o * npix + pix];
  }
  return out;
}

}  // namespace

IntTensor apconv(const BitPlaneTensor& w, const ChannelMajorTensor& x, const ConvShape& shape,
                 const TileConfig& cfg, const ExecContext& ctx) {
  auto y = to_nhwc(conv_accumulate(w, x, shape, cfg, ctx), shape);
  if (ctx.traffic) ctx.traffic->add_written_main(32ull * y.size());
  return IntTensor({shape.batch, shape.out_height(), shape.out_width(), shape.out_channels}, std::move(y));
}

ConvResult apconv(const BitPlaneTensor& w, const ChannelMajorTensor& x, const ConvShape& shape,
                  const TileConfig& cfg, const EpilogueSpec& epilogue, const ExecContext& ctx) {
  check_conv_operands(w, x, shape, cfg);
  epilogue.validate(shape.out_channels);
  const auto y = to_nhwc(conv_accumulate(w, x, shape, cfg, ctx), shape);

  const std::size_t oh = shape.out_height(), ow = shape.out_width(), co = shape.out_channels;
  const std::size_t k = epilogue.pool ? static_cast<std::size_t>(epilogue.pool->size) : 1;
  const std::size_t ph = oh / k, pw = ow / k;
  if (ph == 0 || pw == 0) {
    throw Error(ErrorCode::ShapeMismatch, "pooling window larger than conv output");
  }
  std::vector<std::int32_t> out;
  out.reserve(shape.batch * ph * pw * co);
  const std::size_t per_image = oh * ow * co;
  for (std::size_t n = 0; n < shape.batch; ++n) {
    auto tile = fused_epilogue_tile(std::span<const std::int32_t>(y).subspan(n * per_image, per_image), oh,
                                    ow, co, epilogue);
    out.insert(out.end(), tile.begin(), tile.end());
  }

  IntTensor values({shape.batch, ph, pw, co}, std::move(out));
  if (epilogue.quantize) {
    const int bits = epilogue.quantize->bits;
    if (ctx.traffic) ctx.traffic->add_written_main(static_cast<std::uint64_t>(bits) * values.size());
    return to_channel_major(values, LayoutTag::NHWC, bits, Encoding::ZeroOne);
  }
  if (ctx.traffic) ctx.traffic->add_written_main(32ull * values.size());
  return values;
}

IntTensor apconv_im2col(const BitPlaneTensor& w, const ChannelMajorTensor& x, const ConvShape& s,
                        const TileConfig& cfg, const ExecContext& ctx) {
  check_conv_operands(w, x, s, cfg);
  const PaddingPlan plan = PaddingPlan::build(s, w.encoding(), x.encoding());
  const std::size_t taps = s.kernel * s.kernel;
  const std::size_t ci = s.in_channels;
  const std::size_t oh = s.out_height(), ow = s.out_width();
  const std::size_t npix = s.out_pixels();
  const std::size_t kdim = taps * ci;

  // Weight rows: concatenate the C_in channels of every tap.
  BitPlaneTensor wcol({s.out_channels, kdim}, w.bits(), w.encoding());
  for (int t = 0; t < w.bits(); ++t) {
    for (std::size_t o = 0; o < s.out_channels; ++o) {
      for (std::size_t tap = 0; tap < taps; ++tap) {
        for (std::size_t c = 0; c < ci; ++c) {
          if (w.bit(t, o * taps + tap, c)) wcol.set_bit(t, o, tap * ci + c, true);
        }
      }
    }
  }
  const bool one_pad = plan.strategy == PaddingStrategy::OnePadWithCounter;
  BitPlaneTensor xcol({npix, kdim}, x.bits(), x.encoding());
  for (int t = 0; t < x.bits(); ++t) {
    for (std::size_t pix = 0; pix < npix; ++pix) {
      const std::size_t n = pix / (oh * ow);
      for (std::size_t tap = 0; tap < taps; ++tap) {
        std::size_t iy, ix;
        const bool inside = in_frame((pix / ow) % oh, tap / s.kernel, s, s.height, &iy) &&
                            in_frame(pix % ow, tap % s.kernel, s, s.width, &ix);
        for (std::size_t c = 0; c < ci; ++c) {
          const bool v = inside ? x.bit(n, t, iy, ix, c) : one_pad;
          if (v) xcol.set_bit(t, pix, tap * ci + c, true);
        }
      }
    }
  }

  auto y = apmm(wcol, xcol, cfg, ctx);
  std::vector<std::int32_t> flat(y.values().begin(), y.values().end());
  if (one_pad) apply_counter_correction(flat, w, s, plan);
  return IntTensor({s.batch, oh, ow, s.out_channels}, to_nhwc(flat, s));
}

}  // namespace apbit
