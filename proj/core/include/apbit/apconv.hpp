#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "apbit/apmm.hpp"
#include "apbit/bitplane.hpp"
#include "apbit/epilogue.hpp"
#include "apbit/instrument.hpp"
#include "apbit/tile_config.hpp"

namespace apbit {

enum class LayoutTag { NCHW, NHWC, NPHWC };

std::string_view to_string(LayoutTag t);
LayoutTag parse_layout(std::string_view s);  // throws BadLayoutTag

struct ConvShape {
  std::size_t batch = 1;
  std::size_t in_channels = 128;
  std::size_t height = 1;
  std::size_t width = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;

  std::size_t out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
  std::size_t out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
  std::size_t out_pixels() const { return batch * out_height() * out_width(); }

  void validate() const;  // throws ShapeMismatch
  std::string to_string() const;
};

// Channel runs are padded to a multiple of 128 channels.
inline constexpr std::size_t kChannelQuantum = 128;

// Packed feature map in N, P, H, W, C order: for every (batch, plane, y, x)
// the channels form one contiguous, word-aligned run.
class ChannelMajorTensor {
 public:
  ChannelMajorTensor() = default;
  ChannelMajorTensor(std::size_t batch, std::size_t height, std::size_t width, std::size_t channels,
                     int bits, Encoding encoding);

  std::size_t batch() const { return batch_; }
  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t channels() const { return channels_; }
  int bits() const { return bits_; }
  Encoding encoding() const { return encoding_; }
  std::size_t words_per_run() const { return words_per_run_; }
  std::size_t elements() const { return batch_ * height_ * width_ * channels_; }

  std::span<const Word> words() const { return words_; }
  std::span<const Word> run(std::size_t n, int t, std::size_t y, std::size_t x) const;
  std::span<Word> mutable_run(std::size_t n, int t, std::size_t y, std::size_t x);
  bool bit(std::size_t n, int t, std::size_t y, std::size_t x, std::size_t c) const;

  ChannelMajorTensor with_encoding(Encoding e) const;

  // NHWC bit-plane view ({N, H, W, C} dims, plane-major) for .bpt files.
  BitPlaneTensor to_bitplanes() const;
  static ChannelMajorTensor from_bitplanes(const BitPlaneTensor& t);

  bool operator==(const ChannelMajorTensor&) const = default;

 private:
  std::size_t offset(std::size_t n, int t, std::size_t y, std::size_t x) const;

  std::size_t batch_ = 0, height_ = 0, width_ = 0, channels_ = 0;
  int bits_ = 0;
  Encoding encoding_ = Encoding::ZeroOne;
  std::size_t words_per_run_ = 0;
  std::vector<Word> words_;
};

// Decomposes an NCHW or NHWC value tensor into channel-major planes.
ChannelMajorTensor to_channel_major(const IntTensor& x, LayoutTag layout, int bits, Encoding encoding,
                                    OpCounter* ops = nullptr);
// Values back in NHWC order.
IntTensor from_channel_major(const ChannelMajorTensor& x);

enum class PaddingStrategy { ZeroPad, OnePadWithCounter, ZeroPadSignedWeights };

std::string_view to_string(PaddingStrategy s);

// Out-of-frame feature handling, chosen from operand encodings.
// (0/1 weights, +-1 features) has no padding rule and is rejected.
PaddingStrategy select_padding(Encoding w_enc, Encoding x_enc);

struct PaddingPlan {
  PaddingStrategy strategy = PaddingStrategy::ZeroPad;
  // Per output pixel (n, y, x): channel positions read from outside the frame.
  // Only populated for OnePadWithCounter.
  std::vector<std::uint32_t> counter;

  static PaddingPlan build(const ConvShape& shape, Encoding w_enc, Encoding x_enc);
};

// OIHW weights -> packed planes with dims {C_out, K, K, C_in} so that every
// kernel tap is one channel run.
BitPlaneTensor pack_conv_weights(const IntTensor& oihw, int bits, Encoding encoding,
                                 OpCounter* ops = nullptr);

using ConvResult = std::variant<IntTensor, ChannelMajorTensor>;

// Direct convolution over channel runs. Output is NHWC int32
// {batch, out_height, out_width, out_channels}; out-of-frame taps contribute 0
// in the value domain for every padding strategy.
IntTensor apconv(const BitPlaneTensor& w, const ChannelMajorTensor& x, const ConvShape& shape,
                 const TileConfig& cfg, const ExecContext& ctx = {});

// Fused variant: the epilogue (BN per output channel, ReLU, pooling,
// quantization) runs before the output is persisted. Quantizing epilogues
// produce a channel-major tensor for the next layer.
ConvResult apconv(const BitPlaneTensor& w, const ChannelMajorTensor& x, const ConvShape& shape,
                  const TileConfig& cfg, const EpilogueSpec& epilogue, const ExecContext& ctx = {});

// Second route: materialized im2col operands fed through apmm.
IntTensor apconv_im2col(const BitPlaneTensor& w, const ChannelMajorTensor& x, const ConvShape& shape,
                        const TileConfig& cfg, const ExecContext& ctx = {});

// Predicted staging traffic of apconv (the implied GEMM with K*K taps per
// channel chunk).
TrafficPlan im_traffic(const ConvShape& shape, int p, int q, const TileConfig& cfg);

}  // namespace apbit
