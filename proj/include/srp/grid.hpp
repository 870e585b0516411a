#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "srp/random.hpp"

namespace srp {

inline constexpr int kDefaultGridSize = 7;

// An N x N board of binary tiles, 1 = red and 0 = white, stored row-major.
// Equality is tile-wise; no symmetry canonicalization is ever applied.
class Grid {
 public:
  Grid() = default;
  explicit Grid(int size);
  Grid(int size, std::vector<std::uint8_t> tiles);

  int size() const noexcept { return size_; }
  int tile_count() const noexcept { return size_ * size_; }
  std::uint8_t at(int row, int col) const { return tiles_[static_cast<std::size_t>(row * size_ + col)]; }
  void set(int row, int col, bool red) { tiles_[static_cast<std::size_t>(row * size_ + col)] = red ? 1 : 0; }
  std::span<const std::uint8_t> tiles() const noexcept { return tiles_; }
  int red_count() const noexcept;

  Grid complement() const;
  Grid transposed() const;
  Grid rotated90() const;  // clockwise
  Grid mirrored() const;   // left-right flip
  Grid flipped(int row, int col) const;

  // Bit i of the index is the tile at row-major position i. Only valid for
  // N*N <= 64; used to enumerate small grid state spaces.
  std::uint64_t state_index() const;
  static Grid from_state_index(int size, std::uint64_t index);

  friend bool operator==(const Grid&, const Grid&) = default;
  // Orders by size, then by canonical grid-text (row-major, '0' < '1').
  friend std::strong_ordering operator<=>(const Grid& a, const Grid& b);

 private:
  int size_ = 0;
  std::vector<std::uint8_t> tiles_;
};

struct GridHash {
  std::size_t operator()(const Grid& g) const noexcept;
};

// Tolerant reader: N lines of N tiles, each line either packed "0101" or
// separated by spaces/commas/tabs. Surrounding whitespace and blank lines at
// either end are ignored. Throws srp::Error naming the offending line/column.
Grid parse_grid(std::string_view text);

// Canonical text: N lines of N '0'/'1' characters joined by '\n', no trailing
// newline.
std::string serialize_grid(const Grid& g);

int hamming(const Grid& a, const Grid& b);

// Each tile red independently with probability p; deterministic in seed.
Grid random_grid(std::uint64_t seed, int size = kDefaultGridSize, double p = 0.5);
Grid random_grid(Rng& rng, int size = kDefaultGridSize, double p = 0.5);

Grid checkerboard(int size, bool red_at_origin = true);

// Lossless PNG (8-bit RGB). Red tiles are (255,0,0), white tiles (255,255,255).
struct GridImage {
  int width = 0;
  int height = 0;
  int cell_px = 0;
  std::vector<std::uint8_t> png;
};

GridImage render_image(const Grid& g, int cell_px = 20);

}  // namespace srp
