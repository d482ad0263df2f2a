#pragma once

#include <cstdint>
#include <variant>

#include "apbit/bitplane.hpp"
#include "apbit/bmma.hpp"
#include "apbit/epilogue.hpp"
#include "apbit/instrument.hpp"
#include "apbit/tile_config.hpp"

namespace apbit {

// User-defined element-wise routine run on reduced 32-bit values before they
// leave the kernel: BN -> ReLU -> quantize. BN parameters are per output
// column. Pooling is not element-wise and is rejected here.
using ElementRoutine = EpilogueSpec;

using MatmulResult = std::variant<IntTensor, BitPlaneTensor>;

// Predicted staging traffic of the blocked kernel.
struct TrafficPlan {
  std::uint64_t bytes_per_block_step = 0;  // (b_m * b_k + b_n * b_k) / 8
  std::uint64_t blocks_m = 0;              // ceil(p*M / b_m)
  std::uint64_t blocks_n = 0;              // ceil(q*N / b_n)
  std::uint64_t k_steps = 0;               // ceil(K / b_k)
  std::uint64_t total_bytes = 0;
};

TrafficPlan plan_traffic(std::size_t m, std::size_t n, std::size_t k, int p, int q,
                         const TileConfig& cfg);

// Arbitrary-precision matmul Y[i][j] = sum_k W[i][k] * X[j][k] of a p-bit
// W (M x K) and a q-bit X (N x K, i.e. B pre-transposed), computed as one
// binary GEMM over the virtually batched pM x qN grid followed by in-kernel
// bit combination. Throws ShapeMismatch / BadTileConfig.
IntTensor apmm(const BitPlaneTensor& w, const BitPlaneTensor& x, const TileConfig& cfg,
               const ExecContext& ctx = {});

// Same, with the routine applied before the result is written. Returns packed
// q_out-bit planes (M x N) when the routine quantizes, else int32 values.
MatmulResult apmm(const BitPlaneTensor& w, const BitPlaneTensor& x, const TileConfig& cfg,
                  const ElementRoutine& routine, const ExecContext& ctx = {});

// Reference path: p*q independent plane GEMMs Y^(s,t), then combine().
IntTensor apmm_per_plane(const BitPlaneTensor& w, const BitPlaneTensor& x, const TileConfig& cfg,
                         const ExecContext& ctx = {});

// Applies a quantizing routine to 32-bit values and splits the result into
// packed planes. Throws QuantRangeError when the routine does not quantize.
BitPlaneTensor pack_output(const IntTensor& y, const ElementRoutine& routine,
                           const ExecContext& ctx = {});

}  // namespace apbit
