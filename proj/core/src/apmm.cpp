#include "apbit/apmm.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>

#include "blocked_bmma.hpp"

namespace apbit {

void TileConfig::validate() const {
  auto legal = [](int v) { return std::find(std::begin(kBlockExtents), std::end(kBlockExtents), v) != std::end(kBlockExtents); };
  if (!legal(b_m) || !legal(b_n)) {
    throw Error(ErrorCode::BadTileConfig, "b_m, b_n must be in {16,32,64,128}, got " + to_string());
  }
  if (b_k <= 0 || b_k % kTileBits != 0) {
    throw Error(ErrorCode::BadTileConfig, "b_k must be a positive multiple of 128, got " + to_string());
  }
}

std::string TileConfig::to_string() const {
  std::ostringstream os;
  os << b_m << "x" << b_n << "x" << b_k;
  return os.str();
}

std::vector<TileConfig> legal_tile_grid(int b_k) {
  std::vector<TileConfig> grid;
  for (int bm : kBlockExtents) {
    for (int bn : kBlockExtents) grid.push_back({bm, bn, b_k});
  }
  return grid;
}

TrafficPlan plan_traffic(std::size_t m, std::size_t n, std::size_t k, int p, int q,
                         const TileConfig& cfg) {
  cfg.validate();
  TrafficPlan plan;
  plan.bytes_per_block_step =
      (static_cast<std::uint64_t>(cfg.b_m) * cfg.b_k + static_cast<std::uint64_t>(cfg.b_n) * cfg.b_k) / 8;
  plan.blocks_m = detail::ceil_div(static_cast<std::size_t>(p) * m, cfg.b_m);
  plan.blocks_n = detail::ceil_div(static_cast<std::size_t>(q) * n, cfg.b_n);
  plan.k_steps = detail::ceil_div(k, cfg.b_k);
  plan.total_bytes = plan.bytes_per_block_step * plan.blocks_m * plan.blocks_n * plan.k_steps;
  return plan;
}

namespace {

struct Operands {
  std::size_t m, n, k;
  DotRule rule;
};

Operands check_operands(const BitPlaneTensor& w, const BitPlaneTensor& x, const TileConfig& cfg) {
  cfg.validate();
  if (w.dims().size() != 2 || x.dims().size() != 2) {
    throw Error(ErrorCode::ShapeMismatch, "apmm expects rank-2 operands, got " +
                                              shape_string(w.dims()) + " and " + shape_string(x.dims()));
  }
  if (w.dims()[1] != x.dims()[1]) {
    throw Error(ErrorCode::ShapeMismatch, "inner dimensions differ: W is " + shape_string(w.dims()) +
                                              ", X is " + shape_string(x.dims()));
  }
  return {w.dims()[0], x.dims()[0], w.dims()[1], select_rule(w.encoding(), x.encoding())};
}

// Copies the words of `row` that fall in K step `step` into dst.
void load_step(std::span<const Word> row, std::size_t step, std::span<Word> dst) {
  const std::size_t begin = step * dst.size();
  if (begin >= row.size()) return;
  const std::size_t count = std::min(dst.size(), row.size() - begin);
  std::copy_n(row.begin() + static_cast<std::ptrdiff_t>(begin), count, dst.begin());
}

auto valid_bits_for(std::size_t k, const TileConfig& cfg) {
  return [k, bk = static_cast<std::size_t>(cfg.b_k)](std::size_t step, int sub) {
    const std::size_t start = step * bk + static_cast<std::size_t>(sub) * kTileBits;
    return start >= k ? 0 : static_cast<int>(std::min<std::size_t>(kTileBits, k - start));
  };
}

void add_to(std::int32_t& dst, std::int32_t v, bool concurrent) {
  if (concurrent) {
    std::atomic_ref<std::int32_t>(dst).fetch_add(v, std::memory_order_relaxed);
  } else {
    dst = detail::checked_add(dst, v);
  }
}

// Batched binary GEMM plus bit combination into a kernel-private M x N
// accumulator. Virtual rows interleave planes (row r is element r / p,
// plane r % p) so a block usually holds every plane of its elements and most
// of the reduction stays inside the block.
std::vector<std::int32_t> batched_accumulate(const BitPlaneTensor& w, const BitPlaneTensor& x,
                                             const TileConfig& cfg, const ExecContext& ctx) {
  const auto ops = check_operands(w, x, cfg);
  const std::size_t p = static_cast<std::size_t>(w.bits());
  const std::size_t q = static_cast<std::size_t>(x.bits());
  std::vector<std::int32_t> y(ops.m * ops.n, 0);

  detail::GemmGeometry g{p * ops.m, q * ops.n, detail::ceil_div(ops.k, cfg.b_k)};
  const bool concurrent = ctx.threads > 1;
  std::atomic<std::uint64_t> combined{0};

  detail::run_blocked_bmma(
      g, cfg, ops.rule, ctx,
      [&](std::size_t r, std::size_t step, std::span<Word> dst) {
        load_step(w.row(static_cast<int>(r % p), r / p), step, dst);
      },
      [&](std::size_t c, std::size_t step, std::span<Word> dst) {
        load_step(x.row(static_cast<int>(c % q), c / q), step, dst);
      },
      valid_bits_for(ops.k, cfg),
      [&](std::size_t row0, std::size_t col0, const std::int32_t* acc, std::size_t stride,
          std::size_t nrows, std::size_t ncols) {
        for (std::size_t rr = 0; rr < nrows; ++rr) {
          const std::size_t r = row0 + rr;
          const std::size_t i = r / p;
          const int s = static_cast<int>(r % p);
          for (std::size_t cc = 0; cc < ncols; ++cc) {
            const std::size_t c = col0 + cc;
            const int t = static_cast<int>(c % q);
            const std::int32_t part = detail::checked_mul(acc[rr * stride + cc], std::int32_t{1} << (s + t));
            add_to(y[i * ops.n + c / q], part, concurrent);
          }
        }
        combined.fetch_add(nrows * ncols, std::memory_order_relaxed);
      });

  if (ctx.ops) ctx.ops->add_combine(combined.load());
  return y;
}

BitPlaneTensor pack_values(std::span<const std::int32_t> levels, std::size_t m, std::size_t n, int bits) {
  BitPlaneTensor out({m, n}, bits, Encoding::ZeroOne);
  for (std::size_t i = 0; i < m; ++i) {
    for (int t = 0; t < bits; ++t) {
      auto row = out.mutable_row(t, i);
      for (std::size_t j = 0; j < n; ++j) {
        row[j / kWordBits] |= Word{(static_cast<std::uint32_t>(levels[i * n + j]) >> t) & 1u} << (j % kWordBits);
      }
    }
  }
  return out;
}

void check_routine(const ElementRoutine& routine, std::size_t columns) {
  if (routine.pool) {
    throw Error(ErrorCode::UnsupportedLayer, "pooling is not an element-wise routine");
  }
  routine.validate(columns);
}

}  // namespace

IntTensor apmm(const BitPlaneTensor& w, const BitPlaneTensor& x, const TileConfig& cfg,
               const ExecContext& ctx) {
  auto y = batched_accumulate(w, x, cfg, ctx);
  const std::size_t m = w.dims()[0];
  const std::size_t n = x.dims()[0];
  if (ctx.traffic) ctx.traffic->add_written_main(32ull * m * n);
  return IntTensor({m, n}, std::move(y));
}

MatmulResult apmm(const BitPlaneTensor& w, const BitPlaneTensor& x, const TileConfig& cfg,
                  const ElementRoutine& routine, const ExecContext& ctx) {
  check_operands(w, x, cfg);
  const std::size_t m = w.dims()[0];
  const std::size_t n = x.dims()[0];
  check_routine(routine, n);

  auto y = batched_accumulate(w, x, cfg, ctx);
  // The routine runs on the reduced values before anything is persisted.
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      y[i * n + j] = finalize_value(routine, apply_pointwise(routine, y[i * n + j], j));
    }
  }
  if (routine.quantize) {
    const int bits = routine.quantize->bits;
    if (ctx.traffic) ctx.traffic->add_written_main(static_cast<std::uint64_t>(bits) * m * n);
    return pack_values(y, m, n, bits);
  }
  if (ctx.traffic) ctx.traffic->add_written_main(32ull * m * n);
  return IntTensor({m, n}, std::move(y));
}

IntTensor apmm_per_plane(const BitPlaneTensor& w, const BitPlaneTensor& x, const TileConfig& cfg,
                         const ExecContext& ctx) {
  const auto ops = check_operands(w, x, cfg);
  const int p = w.bits();
  const int q = x.bits();
  std::vector<IntTensor> parts;
  parts.reserve(static_cast<std::size_t>(p) * q);
  for (int s = 0; s < p; ++s) {
    for (int t = 0; t < q; ++t) {
      IntTensor part({ops.m, ops.n});
      auto y = part.values();
      detail::run_blocked_bmma(
          detail::GemmGeometry{ops.m, ops.n, detail::ceil_div(ops.k, cfg.b_k)}, cfg, ops.rule, ctx,
          [&](std::size_t r, std::size_t step, std::span<Word> dst) { load_step(w.row(s, r), step, dst); },
          [&](std::size_t c, std::size_t step, std::span<Word> dst) { load_step(x.row(t, c), step, dst); },
          valid_bits_for(ops.k, cfg),
          [&](std::size_t row0, std::size_t col0, const std::int32_t* acc, std::size_t stride,
              std::size_t nrows, std::size_t ncols) {
            for (std::size_t rr = 0; rr < nrows; ++rr) {
              for (std::size_t cc = 0; cc < ncols; ++cc) y[(row0 + rr) * ops.n + col0 + cc] = acc[rr * stride + cc];
            }
          });
      // Each plane product is a separate kernel whose 32-bit result round-trips main memory.
      if (ctx.traffic) ctx.traffic->add_written_main(32ull * ops.m * ops.n);
      parts.push_back(std::move(part));
    }
  }
  if (ctx.traffic) ctx.traffic->add_read_main(32ull * ops.m * ops.n * parts.size());
  auto y = combine(parts, p, q, ctx.ops);
  if (ctx.traffic) ctx.traffic->add_written_main(32ull * ops.m * ops.n);
  return y;
}

BitPlaneTensor pack_output(const IntTensor& y, const ElementRoutine& routine, const ExecContext& ctx) {
  if (!routine.quantize) {
    throw Error(ErrorCode::QuantRangeError, "pack_output needs a quantizing routine");
  }
  if (y.dims().size() != 2) throw Error(ErrorCode::ShapeMismatch, "pack_output expects rank-2 input");
  const std::size_t m = y.dims()[0];
  const std::size_t n = y.dims()[1];
  check_routine(routine, n);
  std::vector<std::int32_t> levels(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      levels[i * n + j] = finalize_value(routine, apply_pointwise(routine, y.at(i, j), j));
    }
  }
  if (ctx.traffic) {
    ctx.traffic->add_read_main(32ull * m * n);
    ctx.traffic->add_written_main(static_cast<std::uint64_t>(routine.quantize->bits) * m * n);
  }
  return pack_values(levels, m, n, routine.quantize->bits);
}

}  // namespace apbit
