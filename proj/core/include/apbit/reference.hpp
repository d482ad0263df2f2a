#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "apbit/bitplane.hpp"

namespace apbit {

// Plain scalar int32 GEMM, Y[i][j] = sum_k a[i][k] * b[j][k]. a is M x K,
// b is N x K. This is the "native integer" stand-in the precision switch
// dispatches to and the baseline for throughput comparisons; it is kept
// scalar on purpose.
IntTensor reference_gemm(const IntTensor& a, const IntTensor& b);

// Same loop over int8 storage with int32 accumulation.
void reference_gemm_i8(std::span<const std::int8_t> a, std::span<const std::int8_t> b,
                       std::span<std::int32_t> y, std::size_t m, std::size_t n, std::size_t k);

}  // namespace apbit
