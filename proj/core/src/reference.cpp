#include "apbit/reference.hpp"

namespace apbit {

namespace {

template <typename T>
#if defined(__GNUC__) && !defined(__clang__)
__attribute__((optimize("no-tree-vectorize")))
#endif
void scalar_gemm(const T* a, const T* b, std::int32_t* y, std::size_t m, std::size_t n, std::size_t k) {
#if defined(__clang__)
#pragma clang loop vectorize(disable)
#endif
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      std::int32_t acc = 0;
      for (std::size_t kk = 0; kk < k; ++kk) {
        acc += static_cast<std::int32_t>(a[i * k + kk]) * static_cast<std::int32_t>(b[j * k + kk]);
      }
      y[i * n + j] = acc;
    }
  }
}

}  // namespace

IntTensor reference_gemm(const IntTensor& a, const IntTensor& b) {
  if (a.dims().size() != 2 || b.dims().size() != 2 || a.dims()[1] != b.dims()[1]) {
    throw Error(ErrorCode::ShapeMismatch, "reference_gemm: " + shape_string(a.dims()) + " vs " +
                                              shape_string(b.dims()));
  }
  const std::size_t m = a.dims()[0], n = b.dims()[0], k = a.dims()[1];
  IntTensor y({m, n});
  scalar_gemm(a.values().data(), b.values().data(), y.values().data(), m, n, k);
  return y;
}

void reference_gemm_i8(std::span<const std::int8_t> a, std::span<const std::int8_t> b,
                       std::span<std::int32_t> y, std::size_t m, std::size_t n, std::size_t k) {
  if (a.size() != m * k || b.size() != n * k || y.size() != m * n) {
    throw Error(ErrorCode::ShapeMismatch, "reference_gemm_i8 buffer sizes");
  }
  scalar_gemm(a.data(), b.data(), y.data(), m, n, k);
}

}  // namespace apbit
