#include <doctest.h>

#include <random>

#include "apbit/apconv.hpp"
#include "apbit/error.hpp"
#include "oracle.hpp"

using namespace apbit;

namespace {

struct ConvCase {
  ConvShape shape;
  IntTensor xv;  // NHWC values
  IntTensor wv;  // {C_out, K, K, C_in} values
  ChannelMajorTensor x;
  BitPlaneTensor w;
};

ConvCase make(const ConvShape& s, int p, int q, Encoding we, Encoding xe, std::mt19937_64& rng) {
  ConvCase c;
  c.shape = s;
  c.xv = oracle::random_values({s.batch, s.height, s.width, s.in_channels}, q, xe, rng);
  c.wv = oracle::random_values({s.out_channels, s.kernel, s.kernel, s.in_channels}, p, we, rng);
  c.x = to_channel_major(c.xv, LayoutTag::NHWC, q, xe);
  c.w = decompose(c.wv, p, we);
  return c;
}

oracle::ConvGeom geom(const ConvShape& s) {
  return {s.batch, s.in_channels, s.height, s.width, s.out_channels, s.kernel, s.stride, s.pad};
}

IntTensor expected(const ConvCase& c) { return oracle::conv(c.xv, c.wv, geom(c.shape)); }

std::vector<std::pair<Encoding, Encoding>> conv_pairs(int p, int q) {
  std::vector<std::pair<Encoding, Encoding>> out{{Encoding::ZeroOne, Encoding::ZeroOne}};
  if (p == 1) out.emplace_back(Encoding::PlusMinusOne, Encoding::ZeroOne);
  if (p == 1 && q == 1) out.emplace_back(Encoding::PlusMinusOne, Encoding::PlusMinusOne);
  return out;
}

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::IoError;
}

}  // namespace

TEST_CASE("channel-major packing") {
  SUBCASE("single element") {
    const auto t = to_channel_major(IntTensor({1, 1, 1, 1}, {1}), LayoutTag::NHWC, 1, Encoding::ZeroOne);
    CHECK(t.words_per_run() == 2);
    REQUIRE(t.words().size() == 2);
    CHECK(t.words()[0] == 1u);
    CHECK(t.words()[1] == 0u);
  }
  SUBCASE("NCHW and NHWC ingestion pack identically") {
    std::mt19937_64 rng(1);
    const auto nhwc = oracle::random_values({2, 3, 5, 140}, 3, Encoding::ZeroOne, rng);
    const auto a = to_channel_major(nhwc, LayoutTag::NHWC, 3, Encoding::ZeroOne);
    const auto b = to_channel_major(oracle::nhwc_to_nchw(nhwc), LayoutTag::NCHW, 3, Encoding::ZeroOne);
    CHECK(a == b);
  }
  SUBCASE("round trip") {
    std::mt19937_64 rng(2);
    const auto x = oracle::random_values({1, 4, 4, 128}, 2, Encoding::ZeroOne, rng);
    CHECK(from_channel_major(to_channel_major(x, LayoutTag::NHWC, 2, Encoding::ZeroOne)) == x);
    const auto s = oracle::random_values({2, 3, 3, 70}, 1, Encoding::PlusMinusOne, rng);
    CHECK(from_channel_major(to_channel_major(s, LayoutTag::NHWC, 1, Encoding::PlusMinusOne)) == s);
  }
  SUBCASE("plane-major NPHWC offsets") {
    ChannelMajorTensor t(2, 3, 4, 5, 2, Encoding::ZeroOne);
    // ((n*P + t)*H + h)*W + w runs of 2 words each.
    const auto base = t.words().data();
    CHECK(t.run(1, 1, 2, 3).data() - base == static_cast<std::ptrdiff_t>((((1 * 2 + 1) * 3 + 2) * 4 + 3) * 2));
    CHECK(reinterpret_cast<std::uintptr_t>(t.run(1, 0, 1, 1).data()) % alignof(Word) == 0);
  }
  SUBCASE("bit-plane view round trip") {
    std::mt19937_64 rng(3);
    const auto x = to_channel_major(oracle::random_values({1, 2, 2, 130}, 2, Encoding::ZeroOne, rng),
                                    LayoutTag::NHWC, 2, Encoding::ZeroOne);
    CHECK(ChannelMajorTensor::from_bitplanes(x.to_bitplanes()) == x);
  }
  SUBCASE("layout tags") {
    CHECK(parse_layout("NCHW") == LayoutTag::NCHW);
    CHECK(parse_layout("nhwc") == LayoutTag::NHWC);
    CHECK(code_of([] { parse_layout("HWCN"); }) == ErrorCode::BadLayoutTag);
    CHECK(code_of([] { to_channel_major(IntTensor({1, 1, 1, 1}), LayoutTag::NPHWC, 1, Encoding::ZeroOne); }) ==
          ErrorCode::BadLayoutTag);
  }
}

TEST_CASE("padding strategy selection") {
  CHECK(select_padding(Encoding::ZeroOne, Encoding::ZeroOne) == PaddingStrategy::ZeroPad);
  CHECK(select_padding(Encoding::PlusMinusOne, Encoding::PlusMinusOne) == PaddingStrategy::OnePadWithCounter);
  CHECK(select_padding(Encoding::PlusMinusOne, Encoding::ZeroOne) == PaddingStrategy::ZeroPadSignedWeights);
  CHECK(code_of([] { select_padding(Encoding::ZeroOne, Encoding::PlusMinusOne); }) ==
        ErrorCode::IllegalEncodingPair);
}

TEST_CASE("padding counter is geometric") {
  const ConvShape s{1, 128, 4, 4, 1, 3, 1, 1};
  const auto plan = PaddingPlan::build(s, Encoding::PlusMinusOne, Encoding::PlusMinusOne);
  REQUIRE(plan.counter.size() == 16);
  CHECK(plan.counter[0] == 5 * 128);   // corner: 5 of 9 taps outside
  CHECK(plan.counter[1] == 3 * 128);   // edge
  CHECK(plan.counter[5] == 0);         // interior
  for (auto c : plan.counter) CHECK(c <= 9u * 128u);
  CHECK(PaddingPlan::build(s, Encoding::ZeroOne, Encoding::ZeroOne).counter.empty());
}

TEST_CASE("all-ones 1x1 convolution") {
  const ConvShape s{1, 128, 3, 3, 4, 1, 1, 0};
  const auto x = to_channel_major(IntTensor({1, 3, 3, 128}, std::vector<std::int32_t>(9 * 128, 1)), LayoutTag::NHWC,
                                  1, Encoding::ZeroOne);
  const auto w = decompose(IntTensor({4, 1, 1, 128}, std::vector<std::int32_t>(4 * 128, 1)), 1, Encoding::ZeroOne);
  const auto y = apconv(w, x, s, TileConfig{});
  for (auto v : y.values()) CHECK(v == 128);
}

TEST_CASE("worked 3x3 pad-1 examples") {
  std::mt19937_64 rng(33);
  const ConvShape s{1, 128, 4, 4, 4, 3, 1, 1};
  SUBCASE("+-1 weights and features") {
    const auto c = make(s, 1, 1, Encoding::PlusMinusOne, Encoding::PlusMinusOne, rng);
    CHECK(apconv(c.w, c.x, s, TileConfig{}) == expected(c));
  }
  SUBCASE("+-1 weights, 0/1 features") {
    const auto c = make(s, 1, 1, Encoding::PlusMinusOne, Encoding::ZeroOne, rng);
    CHECK(apconv(c.w, c.x, s, TileConfig{}) == expected(c));
  }
}

TEST_CASE("property: apconv equals the scalar convolution oracle") {
  std::mt19937_64 rng(2025);
  std::vector<std::pair<int, int>> pq;
  for (int p = 1; p <= 4; ++p)
    for (int q = 1; q <= 4; ++q) pq.emplace_back(p, q);
  pq.emplace_back(1, 8);
  pq.emplace_back(2, 8);
  const std::size_t hw[] = {4, 8, 16};
  for (const auto& [p, q] : pq) {
    for (const auto& [we, xe] : conv_pairs(p, q)) {
      for (int rep = 0; rep < 2; ++rep) {
        ConvShape s;
        s.batch = 1 + rng() % 2;
        s.height = hw[rng() % 3];
        s.width = hw[rng() % 3];
        s.kernel = rng() % 2 ? 3 : 1;
        s.stride = rng() % 2 ? 2 : 1;
        s.pad = rng() % 2;
        s.in_channels = rng() % 2 ? 256 : 128;
        s.out_channels = rng() % 2 ? 8 : 4;
        const auto c = make(s, p, q, we, xe, rng);
        const TileConfig cfg = legal_tile_grid()[rng() % 16];
        INFO("w" << p << "a" << q << " " << to_string(we) << "/" << to_string(xe) << " " << s.to_string() << " "
                 << cfg.to_string());
        REQUIRE(apconv(c.w, c.x, s, cfg) == expected(c));
      }
    }
  }
}

TEST_CASE("channel counts that are not a multiple of 128") {
  std::mt19937_64 rng(44);
  for (std::size_t ci : {1u, 3u, 64u, 130u}) {
    for (const auto& [we, xe] : conv_pairs(1, 1)) {
      const ConvShape s{2, ci, 5, 5, 3, 3, 1, 1};
      const auto c = make(s, 1, 1, we, xe, rng);
      INFO(ci << " " << to_string(we) << "/" << to_string(xe));
      CHECK(apconv(c.w, c.x, s, TileConfig{16, 32, 128}) == expected(c));
    }
  }
}

TEST_CASE("property: one-padding with counter equals an explicit zero border") {
  std::mt19937_64 rng(55);
  for (int iter = 0; iter < 15; ++iter) {
    const std::size_t pad = 1 + rng() % 2;
    const std::size_t k = pad == 2 ? 5 : 3;
    const ConvShape s{1, 128, 4 + rng() % 5, 4 + rng() % 5, 4, k, 1 + rng() % 2, pad};
    const auto c = make(s, 1, 1, Encoding::PlusMinusOne, Encoding::PlusMinusOne, rng);

    // Literal zero border in the value domain, then an unpadded convolution.
    const std::size_t hp = s.height + 2 * pad, wp = s.width + 2 * pad;
    IntTensor bordered({1, hp, wp, 128});
    for (std::size_t y = 0; y < s.height; ++y)
      for (std::size_t x = 0; x < s.width; ++x)
        for (std::size_t ch = 0; ch < 128; ++ch)
          bordered[((y + pad) * wp + x + pad) * 128 + ch] = c.xv[(y * s.width + x) * 128 + ch];
    const auto ref = oracle::conv(bordered, c.wv, {1, 128, hp, wp, 4, k, s.stride, 0});
    CHECK(apconv(c.w, c.x, s, TileConfig{}) == ref);
  }
}

TEST_CASE("property: NCHW and NHWC ingestion give identical outputs") {
  std::mt19937_64 rng(66);
  for (int iter = 0; iter < 5; ++iter) {
    const ConvShape s{1, 128, 6, 5, 4, 3, 1, 1};
    const auto c = make(s, 2, 3, Encoding::ZeroOne, Encoding::ZeroOne, rng);
    const auto x2 = to_channel_major(oracle::nhwc_to_nchw(c.xv), LayoutTag::NCHW, 3, Encoding::ZeroOne);
    CHECK(apconv(c.w, c.x, s, TileConfig{}) == apconv(c.w, x2, s, TileConfig{}));
  }
}

TEST_CASE("im2col route agrees with the direct route") {
  std::mt19937_64 rng(77);
  for (const auto& [we, xe] : conv_pairs(1, 1)) {
    const ConvShape s{2, 130, 5, 6, 4, 3, 2, 1};
    const auto c = make(s, 1, 1, we, xe, rng);
    CHECK(apconv_im2col(c.w, c.x, s, TileConfig{}) == expected(c));
  }
  const ConvShape s{1, 128, 4, 4, 8, 3, 1, 0};
  const auto c = make(s, 3, 2, Encoding::ZeroOne, Encoding::ZeroOne, rng);
  CHECK(apconv_im2col(c.w, c.x, s, TileConfig{}) == apconv(c.w, c.x, s, TileConfig{}));
}

TEST_CASE("OIHW weights are packed per kernel tap") {
  std::mt19937_64 rng(88);
  const auto oihw = oracle::random_values({4, 7, 3, 3}, 2, Encoding::ZeroOne, rng);
  const auto packed = pack_conv_weights(oihw, 2, Encoding::ZeroOne);
  CHECK(packed.dims() == Shape{4, 3, 3, 7});
  CHECK(reconstruct(packed) == oracle::oihw_to_okki(oihw));
}

TEST_CASE("property: fused epilogue conv equals the separate passes") {
  std::mt19937_64 rng(99);
  for (int iter = 0; iter < 20; ++iter) {
    const ConvShape s{1 + rng() % 2, 128, 4 + 2 * (rng() % 3), 4 + 2 * (rng() % 3), 4, 3, 1, 1};
    const auto c = make(s, 1 + static_cast<int>(rng() % 2), 2, Encoding::ZeroOne, Encoding::ZeroOne, rng);
    EpilogueSpec e;
    if (rng() % 2) {
      BatchNorm bn;
      for (int ch = 0; ch < 4; ++ch) {
        bn.gamma.push_back(0.5 + (rng() % 100) / 50.0);
        bn.beta.push_back((rng() % 10) - 5.0);
        bn.mean.push_back(static_cast<double>(rng() % 400));
        bn.var.push_back(100.0 + rng() % 2000);
      }
      e.bn = bn;
    }
    e.relu = rng() % 2;
    if (rng() % 2) e.pool = Pool{rng() % 2 ? PoolKind::Max : PoolKind::Avg, 2};
    const bool quant = rng() % 3 != 0;
    if (quant) e.quantize = Quantize{static_cast<std::int32_t>(rng() % 5), e.bn ? 0.5 : 40.0, 2};

    const auto y = expected(c);
    const auto ref = oracle::epilogue(std::vector<std::int32_t>(y.values().begin(), y.values().end()), s.batch,
                                      s.out_height(), s.out_width(), 4, e);
    TrafficCounter tc;
    ExecContext ctx;
    ctx.traffic = &tc;
    const auto out = apconv(c.w, c.x, s, TileConfig{}, e, ctx);
    const std::size_t k = e.pool ? 2 : 1;
    const IntTensor ref_t({s.batch, s.out_height() / k, s.out_width() / k, 4}, ref);
    if (quant) {
      REQUIRE(std::holds_alternative<ChannelMajorTensor>(out));
      const auto& packed = std::get<ChannelMajorTensor>(out);
      CHECK(packed.bits() == 2);
      CHECK(from_channel_major(packed) == ref_t);
      CHECK(tc.snapshot().written_main_bits == 2ull * ref.size());
    } else {
      REQUIRE(std::holds_alternative<IntTensor>(out));
      CHECK(std::get<IntTensor>(out) == ref_t);
      CHECK(tc.snapshot().written_main_bits == 32ull * ref.size());
    }
  }
}

TEST_CASE("conv traffic prediction") {
  const TileConfig cfg{32, 64, 128};
  SUBCASE("1x1 kernel is the implied GEMM") {
    const ConvShape s{2, 256, 8, 8, 16, 1, 1, 0};
    const auto a = im_traffic(s, 2, 3, cfg);
    const auto b = plan_traffic(16, s.out_pixels(), 256, 2, 3, cfg);
    CHECK(a.total_bytes == b.total_bytes);
  }
  SUBCASE("3x3 vs 1x1 scales the K loop by 9") {
    const ConvShape one{1, 128, 8, 8, 16, 1, 1, 0};
    const ConvShape three{1, 128, 8, 8, 16, 3, 1, 1};
    CHECK(im_traffic(three, 1, 1, cfg).k_steps == 9 * im_traffic(one, 1, 1, cfg).k_steps);
    CHECK(im_traffic(three, 1, 1, cfg).total_bytes == 9 * im_traffic(one, 1, 1, cfg).total_bytes);
  }
  SUBCASE("stride 2 quarters the output tiles") {
    const ConvShape s1{1, 128, 32, 32, 16, 1, 1, 0};
    const ConvShape s2{1, 128, 32, 32, 16, 1, 2, 0};
    CHECK(im_traffic(s2, 1, 1, cfg).blocks_n * 4 == im_traffic(s1, 1, 1, cfg).blocks_n);
  }
  SUBCASE("instrumented staging matches the prediction") {
    std::mt19937_64 rng(5);
    for (const auto& c : legal_tile_grid()) {
      const ConvShape s{1, 256, 6, 6, 8, 3, 1, 1};
      const auto cc = make(s, 2, 2, Encoding::ZeroOne, Encoding::ZeroOne, rng);
      TrafficCounter tc;
      ExecContext ctx;
      ctx.traffic = &tc;
      apconv(cc.w, cc.x, s, c, ctx);
      CHECK(tc.snapshot().staged_bits == im_traffic(s, 2, 2, c).total_bytes * 8);
    }
  }
}

TEST_CASE("apconv rejects inconsistent operands") {
  std::mt19937_64 rng(6);
  const ConvShape s{1, 128, 4, 4, 4, 3, 1, 1};
  const auto c = make(s, 1, 1, Encoding::ZeroOne, Encoding::ZeroOne, rng);
  ConvShape wrong = s;
  wrong.out_channels = 5;
  CHECK(code_of([&] { apconv(c.w, c.x, wrong, TileConfig{}); }) == ErrorCode::ShapeMismatch);
  ConvShape bad = s;
  bad.kernel = 9;
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::ShapeMismatch);
  const auto xs = to_channel_major(oracle::random_values({1, 4, 4, 128}, 1, Encoding::PlusMinusOne, rng),
                                   LayoutTag::NHWC, 1, Encoding::PlusMinusOne);
  CHECK(code_of([&] { apconv(c.w, xs, s, TileConfig{}); }) == ErrorCode::IllegalEncodingPair);
  CHECK(code_of([&] { apconv(c.w, c.x, s, TileConfig{64, 64, 64}); }) == ErrorCode::BadTileConfig);
}

TEST_CASE("multi-threaded conv is deterministic") {
  std::mt19937_64 rng(7);
  const ConvShape s{2, 256, 8, 8, 8, 3, 1, 1};
  const auto c = make(s, 2, 2, Encoding::ZeroOne, Encoding::ZeroOne, rng);
  ExecContext ctx;
  ctx.threads = 3;
  CHECK(apconv(c.w, c.x, s, TileConfig{16, 16, 128}, ctx) == expected(c));
}
