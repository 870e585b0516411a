#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "srp/complexity.hpp"
#include "srp/ctm.hpp"
#include "support.hpp"

using namespace srp;
using namespace srp::test;

namespace {

const CtmTable& surrogate() {
  static const CtmTable t = surrogate_ctm_table();
  return t;
}

// Straight transcription of the neighbour-pair formula, kept separate from
// the library's counting code.
double lsc_oracle(const Grid& g) {
  const int n = g.size();
  const int dirs[8][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}, {-1, -1}, {-1, 1}, {1, -1}, {1, 1}};
  double total = 0.0;
  for (const auto& d : dirs) {
    double joint[2][2] = {{0, 0}, {0, 0}};
    double pairs = 0;
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) {
        int rr = r + d[0], cc = c + d[1];
        if (rr < 0 || cc < 0 || rr >= n || cc >= n) continue;
        joint[g.at(r, c)][g.at(rr, cc)] += 1;
        pairs += 1;
      }
    for (int s2 = 0; s2 < 2; ++s2) {
      double marg = (joint[0][s2] + joint[1][s2]) / pairs;
      for (int s1 = 0; s1 < 2; ++s1) {
        double pj = joint[s1][s2] / pairs;
        if (pj > 0) total -= pj * std::log2(pj / marg);
      }
    }
  }
  return total / 8.0;
}

std::vector<Grid> dihedral(const Grid& g) {
  std::vector<Grid> out;
  Grid r = g;
  for (int i = 0; i < 4; ++i) {
    out.push_back(r);
    out.push_back(r.mirrored());
    r = r.rotated90();
  }
  return out;
}

}  // namespace

TEST_CASE("entropy values") {
  CHECK(shannon_entropy(Grid(7).complement()) == 0.0);
  CHECK(shannon_entropy(Grid(7)) == 0.0);
  Grid g(7);
  for (int i = 0; i < 25; ++i) g.set(i / 7, i % 7, true);
  CHECK(shannon_entropy(g) == doctest::Approx(0.99970).epsilon(1e-4));
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    Grid x = random_grid(rng, 7, uniform01(rng));
    double h = shannon_entropy(x);
    CHECK(h >= 0.0);
    CHECK(h <= 1.0);
    CHECK(h == doctest::Approx(shannon_entropy(x.complement())).epsilon(1e-12));
  }
}

TEST_CASE("lsc zero cases") {
  for (int n : {2, 3, 7, 8}) {
    CHECK(local_spatial_complexity(Grid(n)) == 0.0);
    CHECK(local_spatial_complexity(Grid(n).complement()) == 0.0);
    CHECK(local_spatial_complexity(checkerboard(n, true)) == doctest::Approx(0.0));
    CHECK(local_spatial_complexity(checkerboard(n, false)) == doctest::Approx(0.0));
  }
  CHECK_THROWS_KIND(local_spatial_complexity(Grid(1)), ErrorKind::kGridTooSmall);
}

TEST_CASE("lsc matches direct formula") {
  Rng rng(2);
  for (int i = 0; i < 300; ++i) {
    Grid g = random_grid(rng, 2 + static_cast<int>(rng() % 7), uniform01(rng));
    REQUIRE(local_spatial_complexity(g) == doctest::Approx(lsc_oracle(g)).epsilon(1e-12));
  }
}

TEST_CASE("lsc of random grids averages above 0.9") {
  Rng rng(3);
  double sum = 0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) sum += local_spatial_complexity(random_grid(rng, 7));
  CHECK(sum / draws > 0.9);
}

TEST_CASE("entropy and lsc invariant under symmetries and complement") {
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    Grid g = random_grid(rng, 7, uniform01(rng));
    const double h = shannon_entropy(g), l = local_spatial_complexity(g);
    for (const Grid& s : dihedral(g)) {
      CHECK(shannon_entropy(s) == doctest::Approx(h).epsilon(1e-12));
      CHECK(local_spatial_complexity(s) == doctest::Approx(l).epsilon(1e-12));
      CHECK(local_spatial_complexity(s.complement()) == doctest::Approx(l).epsilon(1e-12));
    }
  }
}

TEST_CASE("decompose 7x7 and 8x8") {
  auto blocks = decompose_blocks(random_grid(5, 7));
  std::multiset<std::pair<int, int>> shapes;
  int total = 0;
  for (const auto& b : blocks) {
    shapes.insert({b.block.shape.rows, b.block.shape.cols});
    total += b.multiplicity;
  }
  CHECK(total == 4);
  CHECK(shapes == std::multiset<std::pair<int, int>>{{4, 4}, {4, 3}, {3, 4}, {3, 3}});

  auto eight = decompose_blocks(random_grid(6, 8));
  int tiles = 0;
  for (const auto& b : eight) {
    CHECK(b.block.shape == BlockShape{4, 4});
    tiles += b.multiplicity * 16;
  }
  CHECK(tiles == 64);

  auto white = decompose_blocks(Grid(8));
  REQUIRE(white.size() == 1);
  CHECK(white[0].multiplicity == 4);
}

TEST_CASE("recursive convention keeps squares only") {
  // 7x7: one 4x4, two 3x3 from the strips, one 3x3 corner; the 1-wide
  // slivers of the strips are dropped.
  auto blocks = decompose_blocks(random_grid(7, 7), BoundaryConvention::kRecursiveSquare);
  int n44 = 0, n33 = 0, tiles = 0;
  for (const auto& b : blocks) {
    CHECK(b.block.shape.rows == b.block.shape.cols);
    if (b.block.shape.rows == 4) n44 += b.multiplicity;
    if (b.block.shape.rows == 3) n33 += b.multiplicity;
    tiles += b.multiplicity * b.block.shape.tiles();
  }
  CHECK(n44 == 1);
  CHECK(n33 == 3);
  CHECK(tiles == 43);
  CHECK(decompose_blocks(random_grid(7, 8), BoundaryConvention::kIgnoreLeftovers).size() <= 4);
}

TEST_CASE("bdm aggregation") {
  const CtmTable& t = surrogate();
  Grid white8(8);
  CHECK(bdm_kc(white8, t) == doctest::Approx(t.value({4, 4}, 0) + 2.0));

  // unique blocks only: plain sum
  Grid g = random_grid(9, 7);
  auto blocks = decompose_blocks(g);
  double sum = 0;
  for (const auto& b : blocks) {
    REQUIRE(b.multiplicity == 1);
    sum += t.value(b.block.shape, b.block.bits);
  }
  CHECK(bdm_kc(g, t) == doctest::Approx(sum).epsilon(1e-12));

  // k repeats of one 4x4 block: ctm + log2 k
  Grid block = random_grid(10, 4);
  for (int side : {4, 8, 12, 16}) {
    Grid tiled(side);
    for (int r = 0; r < side; ++r)
      for (int c = 0; c < side; ++c) tiled.set(r, c, block.at(r % 4, c % 4) == 1);
    const int k = (side / 4) * (side / 4);
    CHECK(bdm_kc(tiled, t) == doctest::Approx(bdm_kc(block, t) + std::log2(k)).epsilon(1e-12));
  }
}

TEST_CASE("bdm invariant under block permutations") {
  const CtmTable& t = surrogate();
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Grid> quads = {random_grid(rng, 4), random_grid(rng, 4), random_grid(rng, 4)};
    quads.push_back(quads[trial % 3]);  // one duplicate
    auto assemble = [&](const std::vector<int>& order) {
      Grid g(8);
      for (int q = 0; q < 4; ++q)
        for (int r = 0; r < 4; ++r)
          for (int c = 0; c < 4; ++c) g.set((q / 2) * 4 + r, (q % 2) * 4 + c, quads[order[q]].at(r, c) == 1);
      return g;
    };
    double base = bdm_kc(assemble({0, 1, 2, 3}), t);
    CHECK(bdm_kc(assemble({3, 2, 1, 0}), t) == doctest::Approx(base).epsilon(1e-12));
    CHECK(bdm_kc(assemble({1, 3, 0, 2}), t) == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("surrogate table") {
  const CtmTable& t = surrogate();
  CHECK(t.provenance() == CtmProvenance::kSurrogate);
  CHECK(t.entry_count({4, 4}) == 65536);
  for (const auto& s : all_block_shapes()) {
    CHECK(t.covers(s));
    CHECK(t.value(s, 0) == t.min_value(s));
  }
  for (std::uint32_t p = 0; p < 65536; p += 97) CHECK(t.value({4, 4}, p) > 0.0);
}

TEST_CASE("ctm table load and coverage errors") {
  std::ostringstream good;
  surrogate().write(good);
  std::istringstream in(good.str());
  CtmTable back = load_ctm_table(in);
  CHECK(back.provenance() == CtmProvenance::kSurrogate);
  CHECK(back.entry_count({4, 4}) == 65536);
  CHECK(back.value({3, 2}, 17) == doctest::Approx(surrogate().value({3, 2}, 17)).epsilon(1e-12));

  // drop shape 3x3
  std::istringstream src(good.str());
  std::ostringstream pruned;
  std::string line;
  while (std::getline(src, line))
    if (line.rfind("3 3 ", 0) != 0) pruned << line << "\n";
  std::istringstream missing(pruned.str());
  try {
    load_ctm_table(missing);
    FAIL("no throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kIncompleteCoverage);
    CHECK(std::string(e.what()).find("3x3") != std::string::npos);
  }

  std::istringstream bad_header("ctm 2 whatever\n");
  CHECK_THROWS_KIND(load_ctm_table(bad_header), ErrorKind::kParseError);
  std::istringstream bad_row("srp-ctm 1 surrogate:x\n1 1 0 nan\n");
  CHECK_THROWS_KIND(load_ctm_table(bad_row, {{1, 1}}), ErrorKind::kParseError);

  CHECK_THROWS_KIND(surrogate_ctm_table({{4, 4}}).value({3, 3}, 0), ErrorKind::kMissingCtmEntry);
  CHECK_THROWS_KIND(bdm_kc(random_grid(1, 7), surrogate_ctm_table({{4, 4}})), ErrorKind::kMissingCtmEntry);
}

TEST_CASE("bdm matches frozen reference implementation values") {
  CtmTable published = load_ctm_table(repo_data_dir() / "ctm_published_b2_d4x4.txt", square_block_shapes());
  CHECK(published.provenance() == CtmProvenance::kPublished);
  auto refs = load_bdm_reference();
  REQUIRE(refs.size() == 20);
  for (const auto& ref : refs) {
    CHECK(bdm_kc(ref.board, published, BoundaryConvention::kRecursiveSquare) ==
          doctest::Approx(ref.bdm).epsilon(1e-9));
    CHECK(std::abs(bdm_kc(ref.board, published, BoundaryConvention::kRecursiveSquare) - ref.bdm) < 1e-6);
  }
}

TEST_CASE("complexity triple invariants") {
  const CtmTable& t = surrogate();
  Rng rng(13);
  for (int i = 0; i < 50; ++i) {
    auto c = complexity(random_grid(rng, 7), t);
    CHECK(c.kc > 0);
    CHECK(c.entropy >= 0);
    CHECK(c.entropy <= 1);
    CHECK(c.lsc >= 0);
  }
  CHECK(parse_boundary_convention("recursive") == BoundaryConvention::kRecursiveSquare);
  CHECK_THROWS_KIND(parse_boundary_convention("sliding"), ErrorKind::kInvalidArgument);
}
