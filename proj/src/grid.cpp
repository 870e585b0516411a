#include "srp/grid.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <numeric>

#include "srp/error.hpp"

namespace srp {

std::size_t sample_index(std::span<const double> weights, Rng& rng) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (weights.empty() || !(total > 0.0)) {
    throw Error(ErrorKind::kInvalidArgument, "sample_index needs a positive total weight");
  }
  const double u = uniform01(rng) * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (u < acc) return i;
  }
  // Rounding at the top end: return the last index with nonzero weight.
  for (std::size_t i = weights.size(); i-- > 0;) {
    if (weights[i] > 0.0) return i;
  }
  return weights.size() - 1;
}

Grid::Grid(int size) : size_(size), tiles_(static_cast<std::size_t>(size * size), 0) {
  if (size <= 0) throw Error(ErrorKind::kInvalidArgument, "grid size must be positive");
}

Grid::Grid(int size, std::vector<std::uint8_t> tiles) : size_(size), tiles_(std::move(tiles)) {
  if (size <= 0) throw Error(ErrorKind::kInvalidArgument, "grid size must be positive");
  if (tiles_.size() != static_cast<std::size_t>(size * size)) {
    throw Error(ErrorKind::kSizeMismatch, "expected " + std::to_string(size * size) + " tiles, got " +
                                              std::to_string(tiles_.size()));
  }
  for (auto t : tiles_) {
    if (t > 1) throw Error(ErrorKind::kMalformedCharacter, "tile values must be 0 or 1");
  }
}

int Grid::red_count() const noexcept {
  return static_cast<int>(std::count(tiles_.begin(), tiles_.end(), std::uint8_t{1}));
}

Grid Grid::complement() const {
  Grid out = *this;
  for (auto& t : out.tiles_) t ^= 1;
  return out;
}

Grid Grid::transposed() const {
  Grid out(size_);
  for (int r = 0; r < size_; ++r)
    for (int c = 0; c < size_; ++c) out.set(c, r, at(r, c));
  return out;
}

Grid Grid::rotated90() const {
  Grid out(size_);
  for (int r = 0; r < size_; ++r)
    for (int c = 0; c < size_; ++c) out.set(c, size_ - 1 - r, at(r, c));
  return out;
}

Grid Grid::mirrored() const {
  Grid out(size_);
  for (int r = 0; r < size_; ++r)
    for (int c = 0; c < size_; ++c) out.set(r, size_ - 1 - c, at(r, c));
  return out;
}

Grid Grid::flipped(int row, int col) const {
  Grid out = *this;
  out.set(row, col, at(row, col) == 0);
  return out;
}

std::uint64_t Grid::state_index() const {
  if (tile_count() > 64) throw Error(ErrorKind::kStateSpaceTooLarge, "state index needs N*N <= 64");
  std::uint64_t idx = 0;
  for (std::size_t i = 0; i < tiles_.size(); ++i) idx |= static_cast<std::uint64_t>(tiles_[i]) << i;
  return idx;
}

Grid Grid::from_state_index(int size, std::uint64_t index) {
  Grid g(size);
  if (g.tile_count() > 64) throw Error(ErrorKind::kStateSpaceTooLarge, "state index needs N*N <= 64");
  for (std::size_t i = 0; i < g.tiles_.size(); ++i) g.tiles_[i] = static_cast<std::uint8_t>((index >> i) & 1U);
  return g;
}

std::strong_ordering operator<=>(const Grid& a, const Grid& b) {
  if (auto c = a.size_ <=> b.size_; c != 0) return c;
  return std::lexicographical_compare_three_way(a.tiles_.begin(), a.tiles_.end(), b.tiles_.begin(),
                                                b.tiles_.end());
}

std::size_t GridHash::operator()(const Grid& g) const noexcept {
  std::size_t h = mix_seed(static_cast<std::uint64_t>(g.size()));
  std::uint64_t word = 0;
  int bits = 0;
  for (auto t : g.tiles()) {
    word = (word << 1) | t;
    if (++bits == 64) {
      h = mix_seed(h ^ word);
      word = 0;
      bits = 0;
    }
  }
  return mix_seed(h ^ word ^ static_cast<std::uint64_t>(bits));
}

namespace {

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

bool is_separator(char c) { return c == ' ' || c == ',' || c == '\t' || c == ';'; }

std::vector<std::uint8_t> parse_row(std::string_view line, int line_no) {
  std::vector<std::uint8_t> row;
  const bool delimited = std::any_of(line.begin(), line.end(), is_separator);
  std::size_t col = 0;
  while (col < line.size()) {
    const char c = line[col];
    if (delimited && is_separator(c)) {
      ++col;
      continue;
    }
    if (c != '0' && c != '1') {
      throw Error(ErrorKind::kMalformedCharacter, "line " + std::to_string(line_no) + ", column " +
                                                      std::to_string(col + 1) + ": unexpected character '" +
                                                      std::string(1, c) + "'");
    }
    if (delimited && col + 1 < line.size() && !is_separator(line[col + 1])) {
      throw Error(ErrorKind::kMalformedCharacter, "line " + std::to_string(line_no) + ", column " +
                                                      std::to_string(col + 2) + ": multi-digit token");
    }
    row.push_back(static_cast<std::uint8_t>(c - '0'));
    ++col;
  }
  return row;
}

}  // namespace

Grid parse_grid(std::string_view text) {
  const auto body = trim(text);
  std::vector<std::vector<std::uint8_t>> rows;
  std::size_t start = 0;
  int line_no = 0;
  while (start <= body.size() && !body.empty()) {
    const auto end = body.find('\n', start);
    const auto line = trim(body.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
    ++line_no;
    if (line.empty()) {
      throw Error(ErrorKind::kMalformedLineCount, "line " + std::to_string(line_no) + " is blank");
    }
    rows.push_back(parse_row(line, line_no));
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  if (rows.empty()) throw Error(ErrorKind::kMalformedLineCount, "no rows");
  const std::size_t width = rows.front().size();
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != width) {
      throw Error(ErrorKind::kRaggedRows, "line " + std::to_string(i + 1) + " has " +
                                              std::to_string(rows[i].size()) + " tiles, line 1 has " +
                                              std::to_string(width));
    }
  }
  if (rows.size() != width) {
    throw Error(ErrorKind::kMalformedLineCount,
                "got " + std::to_string(rows.size()) + " lines of " + std::to_string(width) + " tiles");
  }
  std::vector<std::uint8_t> tiles;
  tiles.reserve(width * width);
  for (const auto& r : rows) tiles.insert(tiles.end(), r.begin(), r.end());
  return Grid(static_cast<int>(width), std::move(tiles));
}

std::string serialize_grid(const Grid& g) {
  std::string out;
  out.reserve(static_cast<std::size_t>(g.tile_count() + g.size()));
  for (int r = 0; r < g.size(); ++r) {
    if (r > 0) out.push_back('\n');
    for (int c = 0; c < g.size(); ++c) out.push_back(g.at(r, c) ? '1' : '0');
  }
  return out;
}

int hamming(const Grid& a, const Grid& b) {
  if (a.size() != b.size()) {
    throw Error(ErrorKind::kSizeMismatch,
                "hamming of " + std::to_string(a.size()) + "x" + std::to_string(a.size()) + " and " +
                    std::to_string(b.size()) + "x" + std::to_string(b.size()));
  }
  int d = 0;
  auto ta = a.tiles();
  auto tb = b.tiles();
  for (std::size_t i = 0; i < ta.size(); ++i) d += ta[i] != tb[i];
  return d;
}

Grid random_grid(Rng& rng, int size, double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorKind::kInvalidArgument, "red probability must be in [0,1]");
  Grid g(size);
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c) g.set(r, c, uniform01(rng) < p);
  return g;
}

Grid random_grid(std::uint64_t seed, int size, double p) {
  Rng rng(seed);
  return random_grid(rng, size, p);
}

Grid checkerboard(int size, bool red_at_origin) {
  Grid g(size);
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c) g.set(r, c, ((r + c) % 2 == 0) == red_at_origin);
  return g;
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void put_chunk(std::vector<std::uint8_t>& out, const char* type, const std::vector<std::uint8_t>& data) {
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t type_pos = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const auto crc = crc32(0L, out.data() + type_pos, static_cast<uInt>(data.size() + 4));
  put_u32(out, static_cast<std::uint32_t>(crc));
}

}  // namespace

GridImage render_image(const Grid& g, int cell_px) {
  if (cell_px < 1) throw Error(ErrorKind::kInvalidArgument, "cell_px must be >= 1");
  GridImage img;
  img.cell_px = cell_px;
  img.width = img.height = g.size() * cell_px;

  const std::size_t stride = static_cast<std::size_t>(img.width) * 3 + 1;
  std::vector<std::uint8_t> raw(stride * static_cast<std::size_t>(img.height));
  for (int y = 0; y < img.height; ++y) {
    std::uint8_t* row = raw.data() + static_cast<std::size_t>(y) * stride;
    row[0] = 0;  // filter: none
    for (int x = 0; x < img.width; ++x) {
      const bool red = g.at(y / cell_px, x / cell_px) != 0;
      row[1 + 3 * x] = 255;
      row[2 + 3 * x] = red ? 0 : 255;
      row[3 + 3 * x] = red ? 0 : 255;
    }
  }

  uLongf packed_len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> packed(packed_len);
  if (compress2(packed.data(), &packed_len, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK) {
    throw Error(ErrorKind::kIoError, "zlib compression failed");
  }
  packed.resize(packed_len);

  static constexpr std::array<std::uint8_t, 8> kSignature{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  img.png.assign(kSignature.begin(), kSignature.end());
  std::vector<std::uint8_t> ihdr;
  put_u32(ihdr, static_cast<std::uint32_t>(img.width));
  put_u32(ihdr, static_cast<std::uint32_t>(img.height));
  ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});  // 8-bit, truecolor, deflate, no filter, no interlace
  put_chunk(img.png, "IHDR", ihdr);
  put_chunk(img.png, "IDAT", packed);
  put_chunk(img.png, "IEND", {});
  return img;
}

}  // namespace srp
