#pragma once

// Blocked execution of a virtually batched binary GEMM over 8x8x128 bmma
// tiles. Shared by apmm and apconv; they differ only in how a tile row is
// fetched for a K step.

#include <algorithm>
#include <atomic>
#include <cassert>
#include <span>
#include <thread>
#include <vector>

#include "apbit/bmma.hpp"
#include "apbit/instrument.hpp"
#include "apbit/tile_config.hpp"

namespace apbit::detail {

struct GemmGeometry {
  std::size_t rows = 0;     // virtual W rows (p * M)
  std::size_t cols = 0;     // virtual X rows (q * N)
  std::size_t k_steps = 0;  // number of b_k-bit reduction steps
};

inline std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

// Runs every b_m x b_n block of the virtual output grid.
//
//   load_w(row, step, dst)  fills dst (b_k/64 words) for a valid virtual W row
//   load_x(col, step, dst)  same for a virtual X row
//   valid_bits(step, sub)   logical bits in 128-bit sub-chunk `sub` of `step`
//   sink(row0, col0, acc, stride, nrows, ncols)
//                           consumes a finished block accumulator
//
// Rows past the grid edge stage as zeros. Accumulators stay block-private for
// the whole K loop; sink may run concurrently for different blocks.
template <class LoadW, class LoadX, class ValidBits, class Sink>
void run_blocked_bmma(const GemmGeometry& g, const TileConfig& cfg, DotRule rule,
                      const ExecContext& ctx, LoadW&& load_w, LoadX&& load_x,
                      ValidBits&& valid_bits, Sink&& sink) {
  const std::size_t bm = static_cast<std::size_t>(cfg.b_m);
  const std::size_t bn = static_cast<std::size_t>(cfg.b_n);
  const std::size_t wps = static_cast<std::size_t>(cfg.b_k) / kWordBits;  // words per step row
  const int subs = cfg.b_k / kTileBits;
  const std::size_t blocks_m = ceil_div(g.rows, bm);
  const std::size_t blocks_n = ceil_div(g.cols, bn);
  const std::size_t n_blocks = blocks_m * blocks_n;
  if (n_blocks == 0) return;

  // 4 x 2 warps per block; a warp slides 8x8 tiles over its inner tile.
  const std::size_t warp_rows = std::max<std::size_t>(kTileRows, static_cast<std::size_t>(cfg.w_m()));
  const std::size_t warp_cols = std::max<std::size_t>(kTileRows, static_cast<std::size_t>(cfg.w_n()));

  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    std::vector<Word> stage_w(bm * wps);
    std::vector<Word> stage_x(bn * wps);
    std::vector<std::int32_t> acc(bm * bn);
    std::uint64_t tiles = 0;
    std::uint64_t staged = 0;

    for (std::size_t b = next.fetch_add(1); b < n_blocks; b = next.fetch_add(1)) {
      const std::size_t row0 = (b / blocks_n) * bm;
      const std::size_t col0 = (b % blocks_n) * bn;
      const std::size_t nrows = std::min(bm, g.rows - row0);
      const std::size_t ncols = std::min(bn, g.cols - col0);
      const std::size_t row_groups = ceil_div(nrows, kTileRows);
      const std::size_t col_groups = ceil_div(ncols, kTileRows);
      std::fill(acc.begin(), acc.end(), 0);

      for (std::size_t step = 0; step < g.k_steps; ++step) {
        std::fill(stage_w.begin(), stage_w.end(), 0);
        std::fill(stage_x.begin(), stage_x.end(), 0);
        for (std::size_t r = 0; r < nrows; ++r) {
          load_w(row0 + r, step, std::span<Word>(stage_w).subspan(r * wps, wps));
        }
        for (std::size_t c = 0; c < ncols; ++c) {
          load_x(col0 + c, step, std::span<Word>(stage_x).subspan(c * wps, wps));
        }
        staged += (bm + bn) * static_cast<std::uint64_t>(cfg.b_k);

        for (std::size_t wr = 0; wr < bm; wr += warp_rows) {
          for (std::size_t wc = 0; wc < bn; wc += warp_cols) {
            for (int sub = 0; sub < subs; ++sub) {
              const int n = valid_bits(step, sub);
              if (n <= 0) continue;
              for (std::size_t gr = wr / kTileRows; gr < std::min(row_groups, (wr + warp_rows) / kTileRows); ++gr) {
                const BitTile a{stage_w.data() + gr * kTileRows * wps + sub * kTileWords, wps};
                for (std::size_t gc = wc / kTileRows; gc < std::min(col_groups, (wc + warp_cols) / kTileRows); ++gc) {
                  const BitTile bt{stage_x.data() + gc * kTileRows * wps + sub * kTileWords, wps};
                  bmma_tile(a, bt, AccTile{acc.data() + gr * kTileRows * bn + gc * kTileRows, bn}, rule, n);
                  ++tiles;
                }
              }
            }
          }
        }
      }
      sink(row0, col0, static_cast<const std::int32_t*>(acc.data()), bn, nrows, ncols);
    }
    if (ctx.ops) ctx.ops->add_bmma(tiles);
    if (ctx.traffic) ctx.traffic->add_staged(staged);
  };

  const unsigned threads = std::max(1u, std::min<unsigned>(ctx.threads, static_cast<unsigned>(n_blocks)));
  if (threads == 1) {
    worker();
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
}

}  // namespace apbit::detail
