#include "apbit/bmma.hpp"

#include <bit>

#include "apbit/error.hpp"

namespace apbit {

std::string_view to_string(CaseKind k) {
  switch (k) {
    case CaseKind::CaseI: return "CaseI";
    case CaseKind::CaseII: return "CaseII";
    case CaseKind::CaseIII: return "CaseIII";
  }
  return "?";
}

DotRule select_rule(Encoding w_enc, Encoding x_enc) {
  if (w_enc == Encoding::ZeroOne && x_enc == Encoding::ZeroOne) return {CaseKind::CaseI, false};
  if (w_enc == Encoding::PlusMinusOne && x_enc == Encoding::PlusMinusOne) {
    return {CaseKind::CaseII, false};
  }
  if (w_enc == Encoding::PlusMinusOne) return {CaseKind::CaseIII, false};
  return {CaseKind::CaseIII, true};
}

CaseKind select_operator(Encoding w_enc, Encoding x_enc) { return select_rule(w_enc, x_enc).kind; }

BmmaOp operator_for(CaseKind k) { return k == CaseKind::CaseII ? BmmaOp::Xor : BmmaOp::And; }

std::int32_t dot1(std::span<const Word> w, std::span<const Word> x, std::size_t n, CaseKind kind) {
  if (w.size() != x.size() || w.size() != words_for_bits(n)) {
    throw Error(ErrorCode::LengthMismatch, "dot1 operands of " + std::to_string(w.size()) + " and " +
                                               std::to_string(x.size()) + " words for n=" +
                                               std::to_string(n));
  }
  std::int64_t both = 0;
  std::int64_t ones_x = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    switch (kind) {
      case CaseKind::CaseI: both += std::popcount(w[i] & x[i]); break;
      case CaseKind::CaseII: both += std::popcount(w[i] ^ x[i]); break;
      case CaseKind::CaseIII:
        both += std::popcount(w[i] & x[i]);
        ones_x += std::popcount(x[i]);
        break;
    }
  }
  switch (kind) {
    case CaseKind::CaseI: return static_cast<std::int32_t>(both);
    case CaseKind::CaseII: return static_cast<std::int32_t>(static_cast<std::int64_t>(n) - 2 * both);
    case CaseKind::CaseIII: return static_cast<std::int32_t>(2 * both - ones_x);
  }
  return 0;
}

namespace {

template <CaseKind Kind, bool Swapped>
void bmma_kernel(BitTile a, BitTile b, AccTile c, int n) {
  // CaseIII subtracts popc of the unsigned operand's row; it is rank-1, so
  // compute it once per row and share it across the tile.
  [[maybe_unused]] std::array<int, kTileRows> ones{};
  if constexpr (Kind == CaseKind::CaseIII) {
    for (int r = 0; r < kTileRows; ++r) {
      const Word* row = Swapped ? a.row(r) : b.row(r);
      ones[r] = std::popcount(row[0]) + std::popcount(row[1]);
    }
  }
  for (int i = 0; i < kTileRows; ++i) {
    const Word a0 = a.row(i)[0];
    const Word a1 = a.row(i)[1];
    for (int j = 0; j < kTileRows; ++j) {
      const Word b0 = b.row(j)[0];
      const Word b1 = b.row(j)[1];
      int v;
      if constexpr (Kind == CaseKind::CaseI) {
        v = std::popcount(a0 & b0) + std::popcount(a1 & b1);
      } else if constexpr (Kind == CaseKind::CaseII) {
        v = n - 2 * (std::popcount(a0 ^ b0) + std::popcount(a1 ^ b1));
      } else {
        v = 2 * (std::popcount(a0 & b0) + std::popcount(a1 & b1)) - (Swapped ? ones[i] : ones[j]);
      }
      c.at(i, j) += v;
    }
  }
}

}  // namespace

void bmma_tile(BitTile a, BitTile b, AccTile c, DotRule rule, int n) {
  switch (rule.kind) {
    case CaseKind::CaseI: bmma_kernel<CaseKind::CaseI, false>(a, b, c, n); break;
    case CaseKind::CaseII: bmma_kernel<CaseKind::CaseII, false>(a, b, c, n); break;
    case CaseKind::CaseIII:
      if (rule.swapped) {
        bmma_kernel<CaseKind::CaseIII, true>(a, b, c, n);
      } else {
        bmma_kernel<CaseKind::CaseIII, false>(a, b, c, n);
      }
      break;
  }
}

void bmma_tile(std::span<const Word> a, std::span<const Word> b, std::span<std::int32_t> c, CaseKind kind, int n) {
  constexpr std::size_t words = kTileRows * kTileWords;
  if (a.size() != words || b.size() != words || c.size() != kTileRows * kTileRows) {
    throw Error(ErrorCode::ShapeMismatch, "bmma_tile expects 8x128-bit operands and an 8x8 accumulator");
  }
  if (n < 0 || n > kTileBits) throw Error(ErrorCode::ShapeMismatch, "bmma_tile chunk length out of range");
  bmma_tile(BitTile{a.data(), kTileWords}, BitTile{b.data(), kTileWords}, AccTile{c.data(), kTileRows},
            DotRule{kind, false}, n);
}

}  // namespace apbit
