#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "srp/ctm.hpp"
#include "srp/grid.hpp"

namespace srp {

// Tile-colour entropy in bits per tile, in [0, 1].
double shannon_entropy(const Grid& g);

// Mean over the 8 neighbour directions of the conditional entropy
// H(s1 | s2), where s2 is the neighbour of s1 in that direction. Pairs whose
// neighbour falls off the board are omitted (no wraparound). Needs N >= 2.
double local_spatial_complexity(const Grid& g);

enum class BoundaryConvention {
  kMaximalBlocks,    // non-overlapping blocks of up to 4x4, leftovers kept as smaller blocks
  kRecursiveSquare,  // leftovers re-partitioned into squares of their short side (>= 2), rest dropped
  kIgnoreLeftovers,  // only full 4x4 blocks
};

BoundaryConvention parse_boundary_convention(std::string_view name);
std::string_view to_string(BoundaryConvention c);

struct BlockPattern {
  BlockShape shape;
  std::uint32_t bits = 0;  // row-major, first tile most significant

  friend auto operator<=>(const BlockPattern&, const BlockPattern&) = default;
};

struct BlockCount {
  BlockPattern block;
  int multiplicity = 0;
};

// Unique blocks in order of first appearance (top-left to bottom-right scan).
std::vector<BlockCount> decompose_blocks(const Grid& g,
                                         BoundaryConvention convention = BoundaryConvention::kMaximalBlocks);

// Block Decomposition Method: sum over unique blocks of ctm + log2(multiplicity).
double bdm_kc(const Grid& g, const CtmTable& table,
              BoundaryConvention convention = BoundaryConvention::kMaximalBlocks);

struct ComplexityTriple {
  double kc = 0.0;
  double entropy = 0.0;
  double lsc = 0.0;
};

ComplexityTriple complexity(const Grid& g, const CtmTable& table,
                            BoundaryConvention convention = BoundaryConvention::kMaximalBlocks);

}  // namespace srp
