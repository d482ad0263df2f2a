#pragma once

#include <filesystem>
#include <iosfwd>

#include "apbit/bitplane.hpp"

namespace apbit {

// .bpt binary tensor file, all integers little-endian:
//
//   offset  size     field
//   0       4        magic "APBT"
//   4       2        version (u16, currently 1)
//   6       1        encoding (u8: 0 = ZeroOne, 1 = PlusMinusOne)
//   7       1        bits (u8, 1..8)
//   8       1        rank (u8, >= 1)
//   9       4*rank   dims (u32 each, outermost first)
//   ...     8*words  planes t = 0..bits-1, each plane rows x words_per_row u64
//
// Rows are the innermost dimension padded to whole 64-bit words with zero bits.
inline constexpr std::uint16_t kBptVersion = 1;

void write_bpt(std::ostream& os, const BitPlaneTensor& t);
BitPlaneTensor read_bpt(std::istream& is);

void save_bpt(const std::filesystem::path& path, const BitPlaneTensor& t);
BitPlaneTensor load_bpt(const std::filesystem::path& path);

}  // namespace apbit
