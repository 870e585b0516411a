#include "srp/complexity.hpp"

#include <array>
#include <cmath>
#include <map>

#include "srp/error.hpp"

namespace srp {

namespace {

// 0 log 0 = 0
double plogp(double p) { return p > 0.0 ? p * std::log2(p) : 0.0; }

constexpr std::array<std::array<int, 2>, 8> kDirections{{
    {-1, -1}, {-1, 0}, {-1, 1}, {0, -1}, {0, 1}, {1, -1}, {1, 0}, {1, 1},
}};

}  // namespace

double shannon_entropy(const Grid& g) {
  const double p_red = static_cast<double>(g.red_count()) / g.tile_count();
  return -(plogp(p_red) + plogp(1.0 - p_red));
}

double local_spatial_complexity(const Grid& g) {
  const int n = g.size();
  if (n < 2) throw Error(ErrorKind::kGridTooSmall, "local spatial complexity needs N >= 2");
  double total = 0.0;
  for (const auto& [dr, dc] : kDirections) {
    // joint[s1][s2]: s1 at the tile, s2 at its neighbour in direction d
    std::array<std::array<double, 2>, 2> joint{};
    double pairs = 0.0;
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c) {
        const int rr = r + dr;
        const int cc = c + dc;
        if (rr < 0 || rr >= n || cc < 0 || cc >= n) continue;
        joint[g.at(r, c)][g.at(rr, cc)] += 1.0;
        pairs += 1.0;
      }
    }
    double h = 0.0;
    for (int s2 = 0; s2 < 2; ++s2) {
      const double marginal = (joint[0][s2] + joint[1][s2]) / pairs;
      for (int s1 = 0; s1 < 2; ++s1) {
        const double p = joint[s1][s2] / pairs;
        if (p > 0.0) h -= p * std::log2(p / marginal);
      }
    }
    total += h;
  }
  return total / static_cast<double>(kDirections.size());
}

BoundaryConvention parse_boundary_convention(std::string_view name) {
  if (name == "maximal") return BoundaryConvention::kMaximalBlocks;
  if (name == "recursive") return BoundaryConvention::kRecursiveSquare;
  if (name == "ignore") return BoundaryConvention::kIgnoreLeftovers;
  throw Error(ErrorKind::kInvalidArgument,
              "unknown boundary convention '" + std::string(name) + "' (maximal|recursive|ignore)");
}

std::string_view to_string(BoundaryConvention c) {
  switch (c) {
    case BoundaryConvention::kMaximalBlocks: return "maximal";
    case BoundaryConvention::kRecursiveSquare: return "recursive";
    case BoundaryConvention::kIgnoreLeftovers: return "ignore";
  }
  return "maximal";
}

namespace {

constexpr int kBlockSide = 4;
constexpr int kMinRecursiveSide = 2;

class BlockCollector {
 public:
  explicit BlockCollector(const Grid& g) : grid_(g) {}

  void add(int row, int col, int rows, int cols) {
    BlockPattern p{{rows, cols}, 0};
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) p.bits = (p.bits << 1) | grid_.at(row + r, col + c);
    auto [it, inserted] = index_.try_emplace(p, out_.size());
    if (inserted) {
      out_.push_back({p, 1});
    } else {
      ++out_[it->second].multiplicity;
    }
  }

  // Slices the rectangle into side x side tiles; partial edge pieces are
  // handled per convention.
  void partition(int row, int col, int rows, int cols, int side, BoundaryConvention convention) {
    for (int r = 0; r < rows; r += side) {
      for (int c = 0; c < cols; c += side) {
        const int h = std::min(side, rows - r);
        const int w = std::min(side, cols - c);
        if (h == side && w == side) {
          add(row + r, col + c, h, w);
          continue;
        }
        switch (convention) {
          case BoundaryConvention::kMaximalBlocks:
            add(row + r, col + c, h, w);
            break;
          case BoundaryConvention::kRecursiveSquare: {
            const int shrunk = std::min(h, w);
            if (shrunk >= kMinRecursiveSide) partition(row + r, col + c, h, w, shrunk, convention);
            break;
          }
          case BoundaryConvention::kIgnoreLeftovers:
            break;
        }
      }
    }
  }

  std::vector<BlockCount> take() { return std::move(out_); }

 private:
  const Grid& grid_;
  std::map<BlockPattern, std::size_t> index_;
  std::vector<BlockCount> out_;
};

}  // namespace

std::vector<BlockCount> decompose_blocks(const Grid& g, BoundaryConvention convention) {
  BlockCollector collector(g);
  collector.partition(0, 0, g.size(), g.size(), kBlockSide, convention);
  return collector.take();
}

double bdm_kc(const Grid& g, const CtmTable& table, BoundaryConvention convention) {
  const auto blocks = decompose_blocks(g, convention);
  if (blocks.empty()) {
    throw Error(ErrorKind::kGridTooSmall, "no blocks under the '" + std::string(to_string(convention)) +
                                              "' convention for a " + std::to_string(g.size()) + "x" +
                                              std::to_string(g.size()) + " grid");
  }
  double kc = 0.0;
  for (const auto& [block, multiplicity] : blocks) {
    kc += table.value(block.shape, block.bits) + std::log2(static_cast<double>(multiplicity));
  }
  return kc;
}

ComplexityTriple complexity(const Grid& g, const CtmTable& table, BoundaryConvention convention) {
  return {bdm_kc(g, table, convention), shannon_entropy(g), local_spatial_complexity(g)};
}

}  // namespace srp
