#include <doctest.h>

#include <random>

#include "apbit/apmm.hpp"
#include "apbit/error.hpp"
#include "oracle.hpp"

using namespace apbit;

namespace {

struct Problem {
  IntTensor wv, xv;
  BitPlaneTensor w, x;
};

Problem make(std::size_t m, std::size_t n, std::size_t k, int p, int q, Encoding we, Encoding xe,
             std::mt19937_64& rng) {
  Problem pr;
  pr.wv = oracle::random_values({m, k}, p, we, rng);
  pr.xv = oracle::random_values({n, k}, q, xe, rng);
  pr.w = decompose(pr.wv, p, we);
  pr.x = decompose(pr.xv, q, xe);
  return pr;
}

std::vector<std::pair<Encoding, Encoding>> legal_pairs(int p, int q) {
  std::vector<std::pair<Encoding, Encoding>> out{{Encoding::ZeroOne, Encoding::ZeroOne}};
  if (p == 1) out.emplace_back(Encoding::PlusMinusOne, Encoding::ZeroOne);
  if (q == 1) out.emplace_back(Encoding::ZeroOne, Encoding::PlusMinusOne);
  if (p == 1 && q == 1) out.emplace_back(Encoding::PlusMinusOne, Encoding::PlusMinusOne);
  return out;
}

EpilogueSpec random_routine(std::size_t cols, std::mt19937_64& rng, double spread) {
  EpilogueSpec r;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  if (rng() % 2) {
    BatchNorm bn;
    for (std::size_t c = 0; c < cols; ++c) {
      bn.gamma.push_back(2 * u(rng));
      bn.beta.push_back(4 * u(rng));
      bn.mean.push_back(spread * u(rng));
      bn.var.push_back(spread * spread * (1.5 + u(rng)));
    }
    r.bn = bn;
    spread = 4.0;
  }
  r.relu = rng() % 2;
  Quantize q;
  q.bits = 1 + static_cast<int>(rng() % 4);
  q.zero_point = static_cast<int>(rng() % 7) - 3;
  q.scale = std::max(0.5, spread / (1 << q.bits));
  r.quantize = q;
  return r;
}

}  // namespace

TEST_CASE("single overlapping bit") {
  IntTensor one({1, 128});
  one[0] = 1;
  const auto w = decompose(one, 1, Encoding::ZeroOne);
  CHECK(apmm(w, w, TileConfig{}) == IntTensor({1, 1}, {1}));
}

TEST_CASE("property: apmm equals the integer oracle over the full (p,q) grid") {
  std::mt19937_64 rng(2024);
  const std::size_t dims[] = {8, 16, 64, 128};
  const std::size_t ks[] = {128, 256, 512};
  for (int p = 1; p <= 8; ++p) {
    for (int q = 1; q <= 8; ++q) {
      for (const auto& [we, xe] : legal_pairs(p, q)) {
        const std::size_t m = dims[rng() % 4], n = dims[rng() % 4], k = ks[rng() % 3];
        const auto pr = make(m, n, k, p, q, we, xe, rng);
        const TileConfig cfg = legal_tile_grid()[rng() % 16];
        INFO("w" << p << "a" << q << " " << to_string(we) << "/" << to_string(xe) << " " << m << "x" << n << "x" << k
                 << " cfg " << cfg.to_string());
        REQUIRE(apmm(pr.w, pr.x, cfg) == oracle::gemm(pr.wv, pr.xv));
      }
    }
  }
}

TEST_CASE("worked shapes") {
  std::mt19937_64 rng(1);
  SUBCASE("128^3 w1a2") {
    const auto pr = make(128, 128, 128, 1, 2, Encoding::ZeroOne, Encoding::ZeroOne, rng);
    CHECK(apmm(pr.w, pr.x, TileConfig{}) == oracle::gemm(pr.wv, pr.xv));
  }
  SUBCASE("M=64, K=N=1024 w2a2, every config") {
    const auto pr = make(64, 1024, 1024, 2, 2, Encoding::ZeroOne, Encoding::ZeroOne, rng);
    const auto expect = oracle::gemm(pr.wv, pr.xv);
    for (const auto& cfg : legal_tile_grid()) {
      INFO(cfg.to_string());
      CHECK(apmm(pr.w, pr.x, cfg) == expect);
    }
  }
}

TEST_CASE("property: result is identical for every tile config and thread count") {
  std::mt19937_64 rng(77);
  for (int iter = 0; iter < 6; ++iter) {
    const int p = 1 + static_cast<int>(rng() % 3), q = 1 + static_cast<int>(rng() % 3);
    const auto pr = make(40 + rng() % 50, 30 + rng() % 70, 300 + rng() % 300, p, q, Encoding::ZeroOne,
                         Encoding::ZeroOne, rng);
    const auto expect = oracle::gemm(pr.wv, pr.xv);
    for (int bk : {128, 256, 512}) {
      for (const auto& cfg : legal_tile_grid(bk)) {
        REQUIRE(apmm(pr.w, pr.x, cfg) == expect);
      }
    }
    ExecContext ctx;
    ctx.threads = 4;
    CHECK(apmm(pr.w, pr.x, TileConfig{32, 16, 128}, ctx) == expect);
  }
}

TEST_CASE("K that is not a multiple of 128 is zero-staged") {
  std::mt19937_64 rng(8);
  for (std::size_t k : {1u, 7u, 64u, 129u, 200u}) {
    for (const auto& [we, xe] : legal_pairs(1, 1)) {
      const auto pr = make(9, 13, k, 1, 1, we, xe, rng);
      CHECK(apmm(pr.w, pr.x, TileConfig{16, 16, 128}) == oracle::gemm(pr.wv, pr.xv));
    }
  }
}

TEST_CASE("property: virtual batching equals p*q separate plane GEMMs") {
  std::mt19937_64 rng(99);
  for (int iter = 0; iter < 20; ++iter) {
    const int p = 1 + static_cast<int>(rng() % 4), q = 1 + static_cast<int>(rng() % 4);
    for (const auto& [we, xe] : legal_pairs(p, q)) {
      const auto pr = make(8 + rng() % 30, 8 + rng() % 30, 128 * (1 + rng() % 3), p, q, we, xe, rng);
      const TileConfig cfg = legal_tile_grid()[rng() % 16];
      REQUIRE(apmm(pr.w, pr.x, cfg) == apmm_per_plane(pr.w, pr.x, cfg));
    }
  }
}

TEST_CASE("pack_output examples") {
  EpilogueSpec r;
  r.quantize = Quantize{1, 2.0, 2};
  const auto planes = pack_output(IntTensor({1, 1}, {7}), r);
  CHECK(planes.bits() == 2);
  CHECK(planes.bit(0, 0, 0));
  CHECK(planes.bit(1, 0, 0));

  r.quantize = Quantize{0, 1.0, 1};
  const auto zero = pack_output(IntTensor({1, 1}, {0}), r);
  CHECK_FALSE(zero.bit(0, 0, 0));

  CHECK_THROWS_AS(pack_output(IntTensor({1, 1}, {0}), EpilogueSpec{}), Error);
  try {
    pack_output(IntTensor({1, 1}, {0}), EpilogueSpec{});
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::QuantRangeError);
  }
}

TEST_CASE("property: pack_output equals decompose of the clamped floor quantization") {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> v(-500, 500);
  for (int iter = 0; iter < 100; ++iter) {
    IntTensor y({3, 7});
    for (auto& e : y.values()) e = v(rng);
    EpilogueSpec r;
    r.quantize = Quantize{static_cast<std::int32_t>(v(rng) / 10), 0.5 + (rng() % 100) / 7.0,
                          1 + static_cast<int>(rng() % 8)};
    IntTensor levels(y.dims());
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double l = std::floor((y[i] - r.quantize->zero_point) / r.quantize->scale);
      levels[i] = static_cast<std::int32_t>(std::clamp(l, 0.0, double(r.quantize->max_level())));
    }
    CHECK(pack_output(y, r) == decompose(levels, r.quantize->bits, Encoding::ZeroOne));
  }
}

TEST_CASE("property: routine fusion equals pack_output of the plain result") {
  std::mt19937_64 rng(5);
  for (int iter = 0; iter < 40; ++iter) {
    const int p = 1 + static_cast<int>(rng() % 4), q = 1 + static_cast<int>(rng() % 4);
    const auto pairs = legal_pairs(p, q);
    const auto [we, xe] = pairs[rng() % pairs.size()];
    const std::size_t k = 128 * (1 + rng() % 2);
    const auto pr = make(8 + rng() % 20, 8 + rng() % 20, k, p, q, we, xe, rng);
    const auto routine = random_routine(pr.x.dims()[0], rng, std::sqrt(double(k)) * (1 << (p + q - 2)));
    const TileConfig cfg = legal_tile_grid()[rng() % 16];
    const auto fused = apmm(pr.w, pr.x, cfg, routine);
    REQUIRE(std::holds_alternative<BitPlaneTensor>(fused));
    CHECK(std::get<BitPlaneTensor>(fused) == pack_output(apmm(pr.w, pr.x, cfg), routine));
  }
}

TEST_CASE("routine without quantization returns int32 values") {
  std::mt19937_64 rng(6);
  const auto pr = make(8, 8, 128, 2, 2, Encoding::ZeroOne, Encoding::ZeroOne, rng);
  EpilogueSpec r;
  r.relu = true;
  const auto out = apmm(pr.w, pr.x, TileConfig{}, r);
  REQUIRE(std::holds_alternative<IntTensor>(out));
  CHECK(std::get<IntTensor>(out) == apmm(pr.w, pr.x, TileConfig{}));

  EpilogueSpec pool;
  pool.pool = Pool{PoolKind::Max, 2};
  CHECK_THROWS_AS(apmm(pr.w, pr.x, TileConfig{}, pool), Error);
}

TEST_CASE("plan_traffic examples") {
  CHECK(plan_traffic(64, 64, 128, 1, 1, TileConfig{64, 64, 128}).bytes_per_block_step == 2048);
  CHECK(plan_traffic(64, 64, 128, 1, 1, TileConfig{16, 128, 128}).bytes_per_block_step == 2304);
  for (const auto& cfg : legal_tile_grid()) {
    const TileConfig wide{cfg.b_m, cfg.b_n, 256};
    const auto a = plan_traffic(256, 256, 1024, 2, 3, cfg);
    const auto b = plan_traffic(256, 256, 1024, 2, 3, wide);
    CHECK(b.bytes_per_block_step == 2 * a.bytes_per_block_step);
    CHECK(b.k_steps * 2 == a.k_steps);
    CHECK(a.total_bytes == b.total_bytes);
  }
}

TEST_CASE("property: instrumented staging traffic matches plan_traffic exactly") {
  std::mt19937_64 rng(12);
  for (int iter = 0; iter < 4; ++iter) {
    const int p = 1 + static_cast<int>(rng() % 3), q = 1 + static_cast<int>(rng() % 3);
    const std::size_t m = 8 * (1 + rng() % 12), n = 8 * (1 + rng() % 12), k = 128 * (1 + rng() % 4);
    const auto pr = make(m, n, k, p, q, Encoding::ZeroOne, Encoding::ZeroOne, rng);
    for (int bk : {128, 256}) {
      for (const auto& cfg : legal_tile_grid(bk)) {
        TrafficCounter tc;
        ExecContext ctx;
        ctx.traffic = &tc;
        apmm(pr.w, pr.x, cfg, ctx);
        const auto plan = plan_traffic(m, n, k, p, q, cfg);
        REQUIRE(tc.snapshot().staged_bits == plan.total_bytes * 8);
        CHECK(tc.snapshot().written_main_bits == 32ull * m * n);
      }
    }
  }
}

TEST_CASE("property: larger blocks strictly reduce staged traffic") {
  const std::size_t m = 256, n = 512, k = 512;
  for (const auto& a : legal_tile_grid()) {
    for (const auto& b : legal_tile_grid()) {
      if (a == b || b.b_m < a.b_m || b.b_n < a.b_n) continue;
      CHECK(plan_traffic(m, n, k, 2, 2, b).total_bytes < plan_traffic(m, n, k, 2, 2, a).total_bytes);
    }
  }
}

TEST_CASE("bmma work scales by exactly p*q") {
  std::mt19937_64 rng(13);
  const std::size_t m = 64, n = 128, k = 512;
  auto tiles = [&](int p, int q) {
    const auto pr = make(m, n, k, p, q, Encoding::ZeroOne, Encoding::ZeroOne, rng);
    OpCounter ops;
    ExecContext ctx;
    ctx.ops = &ops;
    apmm(pr.w, pr.x, TileConfig{}, ctx);
    return ops.snapshot().bmma_tiles;
  };
  const auto base = tiles(1, 1);
  CHECK(base == (m / 8) * (n / 8) * (k / 128));
  for (int p = 1; p <= 8; p += 3)
    for (int q = 1; q <= 8; q += 2) CHECK(tiles(p, q) == static_cast<std::uint64_t>(p * q) * base);
}

TEST_CASE("apmm rejects bad shapes and configs") {
  std::mt19937_64 rng(14);
  const auto a = make(8, 8, 128, 1, 1, Encoding::ZeroOne, Encoding::ZeroOne, rng);
  const auto b = make(8, 8, 256, 1, 1, Encoding::ZeroOne, Encoding::ZeroOne, rng);
  auto code = [](auto&& f) {
    try {
      f();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::IoError;
  };
  CHECK(code([&] { apmm(a.w, b.x, TileConfig{}); }) == ErrorCode::ShapeMismatch);
  CHECK(code([&] { apmm(a.w, a.x, TileConfig{8, 64, 128}); }) == ErrorCode::BadTileConfig);
  CHECK(code([&] { apmm(a.w, a.x, TileConfig{64, 64, 100}); }) == ErrorCode::BadTileConfig);
  CHECK(TileConfig{64, 32, 128}.w_m() == 16);
  CHECK(TileConfig{64, 32, 128}.w_n() == 16);
  CHECK(TileConfig{64, 32, 256}.w_k() == 256);
}
