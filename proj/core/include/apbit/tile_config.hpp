#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace apbit {

// Block tiling of the virtually batched binary GEMM. Inner (warp) tiles
// follow the fixed 4 x 2 split of a block: w_m = b_m / 4, w_n = b_n / 2,
// w_k = b_k.
struct TileConfig {
  int b_m = 64;
  int b_n = 64;
  int b_k = 128;

  int w_m() const { return b_m / 4; }
  int w_n() const { return b_n / 2; }
  int w_k() const { return b_k; }

  // Throws BadTileConfig.
  void validate() const;
  std::string to_string() const;

  bool operator==(const TileConfig&) const = default;
};

inline constexpr int kBlockExtents[] = {16, 32, 64, 128};
inline constexpr int kDefaultBlockK = 128;

// All 16 (b_m, b_n) pairs at the given b_k.
std::vector<TileConfig> legal_tile_grid(int b_k = kDefaultBlockK);

}  // namespace apbit
