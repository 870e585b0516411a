#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace srp {

struct BlockShape {
  int rows = 0;
  int cols = 0;

  int tiles() const noexcept { return rows * cols; }
  friend auto operator<=>(const BlockShape&, const BlockShape&) = default;
};

// Every h x w shape with 1 <= h, w <= 4.
std::vector<BlockShape> all_block_shapes();
// Only the square shapes 1x1 .. 4x4.
std::vector<BlockShape> square_block_shapes();

enum class CtmProvenance { kPublished, kSurrogate };

// Algorithmic-complexity values (bits) for small binary blocks. A block
// pattern is the row-major tile string read as a binary number, first tile
// most significant. Immutable once built; share freely across threads.
class CtmTable {
 public:
  CtmTable(CtmProvenance provenance, std::string source,
           std::map<BlockShape, std::vector<double>> values);

  CtmProvenance provenance() const noexcept { return provenance_; }
  const std::string& source() const noexcept { return source_; }
  std::string provenance_tag() const;

  bool covers(BlockShape shape) const { return values_.contains(shape); }
  std::vector<BlockShape> shapes() const;
  std::size_t entry_count(BlockShape shape) const;
  // Throws kMissingCtmEntry for an uncovered shape or out-of-range pattern.
  double value(BlockShape shape, std::uint32_t pattern) const;
  double min_value(BlockShape shape) const;

  void write(std::ostream& out) const;

 private:
  CtmProvenance provenance_;
  std::string source_;
  std::map<BlockShape, std::vector<double>> values_;
};

// Text format:
//   srp-ctm 1 <published|surrogate>:<source>
//   <h> <w> <row-major bitstring> <value in bits>
//   ...
// Lines starting with '#' and blank lines are ignored after the header.
// Every shape in `required` must be complete; any shape that is present at
// all must also be complete.
CtmTable load_ctm_table(std::istream& in, const std::vector<BlockShape>& required = all_block_shapes());
CtmTable load_ctm_table(const std::filesystem::path& path,
                        const std::vector<BlockShape>& required = all_block_shapes());

// Deterministic stand-in for the published dataset: per-shape scaled block
// entropy plus a transition term, with rank-based tie-breaking. Provenance is
// always kSurrogate so its values are never mixed with published ones.
CtmTable surrogate_ctm_table(const std::vector<BlockShape>& shapes = all_block_shapes());

std::string pattern_to_bits(BlockShape shape, std::uint32_t pattern);

}  // namespace srp
