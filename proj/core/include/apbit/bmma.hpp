#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <span>

#include "apbit/bitplane.hpp"

namespace apbit {

// Bitwise operator fed to the binary multiply-accumulate.
enum class BmmaOp { And, Xor };

// Dot-product rule chosen from operand encodings.
enum class CaseKind {
  CaseI,    // 0/1 x 0/1: popc(w AND x)
  CaseII,   // +-1 x +-1: n - 2 popc(w XOR x)
  CaseIII,  // +-1 x 0/1: 2 popc(w AND x) - popc(x)
};

std::string_view to_string(CaseKind k);

// Full operator selection. `swapped` marks the 0/1-weights x +-1-features
// orientation, which runs the CaseIII algebra with the operands' roles
// exchanged (the signed side is the second operand).
struct DotRule {
  CaseKind kind = CaseKind::CaseI;
  bool swapped = false;

  bool operator==(const DotRule&) const = default;
};

DotRule select_rule(Encoding w_enc, Encoding x_enc);
CaseKind select_operator(Encoding w_enc, Encoding x_enc);
BmmaOp operator_for(CaseKind k);

// Scalar binary dot product of two packed vectors of logical length n.
// Bits beyond n must be zero in both operands.
std::int32_t dot1(std::span<const Word> w, std::span<const Word> x, std::size_t n, CaseKind kind);

// The primitive's quantum: 8 rows of 128 bits, times 8 rows of 128 bits,
// into an 8x8 block of 32-bit accumulators.
inline constexpr int kTileRows = 8;
inline constexpr int kTileBits = 128;
inline constexpr int kTileWords = kTileBits / kWordBits;

// Strided view of an 8x128-bit operand tile; row i starts at data + i * stride.
struct BitTile {
  const Word* data = nullptr;
  std::size_t stride = kTileWords;

  const Word* row(int i) const { return data + static_cast<std::size_t>(i) * stride; }
};

// Strided view of an 8x8 accumulator block.
struct AccTile {
  std::int32_t* data = nullptr;
  std::size_t stride = kTileRows;

  std::int32_t& at(int i, int j) const { return data[static_cast<std::size_t>(i) * stride + j]; }
};

// C[i][j] += dot(A_i, B_j) over one 128-bit chunk. `n` is the number of
// logical bits in the chunk (only CaseII reads it).
void bmma_tile(BitTile a, BitTile b, AccTile c, DotRule rule, int n = kTileBits);
inline void bmma_tile(BitTile a, BitTile b, AccTile c, CaseKind kind, int n = kTileBits) {
  bmma_tile(a, b, c, DotRule{kind, false}, n);
}

// Checked form over dense operands: a and b hold 8 rows of 2 words, c holds
// 8x8 accumulators. Throws ShapeMismatch on any other size.
void bmma_tile(std::span<const Word> a, std::span<const Word> b, std::span<std::int32_t> c, CaseKind kind,
               int n = kTileBits);

// Owning 8x128 operand tile, handy for tests and tools.
struct PackedTile {
  std::array<Word, kTileRows * kTileWords> words{};

  BitTile view() const { return BitTile{words.data(), kTileWords}; }
  void set(int r, int c, bool v) {
    Word& w = words[static_cast<std::size_t>(r) * kTileWords + c / kWordBits];
    const Word m = Word{1} << (c % kWordBits);
    w = v ? (w | m) : (w & ~m);
  }
  bool get(int r, int c) const {
    return (words[static_cast<std::size_t>(r) * kTileWords + c / kWordBits] >> (c % kWordBits)) & 1u;
  }
};

using AccBlock = std::array<std::int32_t, kTileRows * kTileRows>;

}  // namespace apbit
