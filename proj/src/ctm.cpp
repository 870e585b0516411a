#include "srp/ctm.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "srp/error.hpp"

namespace srp {

std::vector<BlockShape> all_block_shapes() {
  std::vector<BlockShape> out;
  for (int h = 1; h <= 4; ++h)
    for (int w = 1; w <= 4; ++w) out.push_back({h, w});
  return out;
}

std::vector<BlockShape> square_block_shapes() { return {{1, 1}, {2, 2}, {3, 3}, {4, 4}}; }

namespace {

std::string shape_name(BlockShape s) { return std::to_string(s.rows) + "x" + std::to_string(s.cols); }

constexpr std::string_view kMagic = "srp-ctm";

}  // namespace

std::string pattern_to_bits(BlockShape shape, std::uint32_t pattern) {
  const int n = shape.tiles();
  std::string bits(static_cast<std::size_t>(n), '0');
  for (int i = 0; i < n; ++i) {
    if ((pattern >> (n - 1 - i)) & 1U) bits[static_cast<std::size_t>(i)] = '1';
  }
  return bits;
}

CtmTable::CtmTable(CtmProvenance provenance, std::string source, std::map<BlockShape, std::vector<double>> values)
    : provenance_(provenance), source_(std::move(source)), values_(std::move(values)) {
  for (const auto& [shape, vals] : values_) {
    if (shape.rows < 1 || shape.cols < 1 || shape.tiles() > 16) {
      throw Error(ErrorKind::kInvalidArgument, "unsupported block shape " + shape_name(shape));
    }
    if (vals.size() != (std::size_t{1} << shape.tiles())) {
      throw Error(ErrorKind::kIncompleteCoverage, "shape " + shape_name(shape) + " is incomplete");
    }
    for (double v : vals) {
      if (!std::isfinite(v) || v <= 0.0) {
        throw Error(ErrorKind::kParseError, "ctm values must be finite and positive (shape " + shape_name(shape) + ")");
      }
    }
  }
}

std::string CtmTable::provenance_tag() const {
  return std::string(provenance_ == CtmProvenance::kPublished ? "published" : "surrogate") + ":" + source_;
}

std::vector<BlockShape> CtmTable::shapes() const {
  std::vector<BlockShape> out;
  for (const auto& kv : values_) out.push_back(kv.first);
  return out;
}

std::size_t CtmTable::entry_count(BlockShape shape) const {
  auto it = values_.find(shape);
  return it == values_.end() ? 0 : it->second.size();
}

double CtmTable::value(BlockShape shape, std::uint32_t pattern) const {
  auto it = values_.find(shape);
  if (it == values_.end()) {
    throw Error(ErrorKind::kMissingCtmEntry, "table " + provenance_tag() + " has no shape " + shape_name(shape));
  }
  if (pattern >= it->second.size()) {
    throw Error(ErrorKind::kMissingCtmEntry, "pattern out of range for shape " + shape_name(shape));
  }
  return it->second[pattern];
}

double CtmTable::min_value(BlockShape shape) const {
  auto it = values_.find(shape);
  if (it == values_.end()) throw Error(ErrorKind::kMissingCtmEntry, "no shape " + shape_name(shape));
  return *std::min_element(it->second.begin(), it->second.end());
}

void CtmTable::write(std::ostream& out) const {
  out << kMagic << " 1 " << provenance_tag() << '\n';
  out << std::setprecision(17);
  for (const auto& [shape, vals] : values_) {
    for (std::uint32_t p = 0; p < vals.size(); ++p) {
      out << shape.rows << ' ' << shape.cols << ' ' << pattern_to_bits(shape, p) << ' ' << vals[p] << '\n';
    }
  }
}

CtmTable load_ctm_table(std::istream& in, const std::vector<BlockShape>& required) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::kParseError, "empty ctm table");
  std::istringstream header(line);
  std::string magic;
  int version = 0;
  std::string tag;
  if (!(header >> magic >> version >> tag) || magic != kMagic) {
    throw Error(ErrorKind::kParseError, "line 1: expected '" + std::string(kMagic) + " <version> <provenance>'");
  }
  if (version != 1) throw Error(ErrorKind::kParseError, "line 1: unsupported version " + std::to_string(version));
  const auto colon = tag.find(':');
  const std::string kind = tag.substr(0, colon);
  const std::string source = colon == std::string::npos ? std::string{} : tag.substr(colon + 1);
  CtmProvenance provenance;
  if (kind == "published") {
    provenance = CtmProvenance::kPublished;
  } else if (kind == "surrogate") {
    provenance = CtmProvenance::kSurrogate;
  } else {
    throw Error(ErrorKind::kParseError, "line 1: provenance must be published:<name> or surrogate:<name>");
  }

  std::map<BlockShape, std::vector<double>> values;
  std::map<BlockShape, std::vector<bool>> seen;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#' || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream rec(line);
    BlockShape shape;
    std::string bits;
    std::string value_text;
    if (!(rec >> shape.rows >> shape.cols >> bits >> value_text)) {
      throw Error(ErrorKind::kParseError, "line " + std::to_string(line_no) + ": expected '<h> <w> <bits> <value>'");
    }
    if (shape.rows < 1 || shape.rows > 4 || shape.cols < 1 || shape.cols > 4) {
      throw Error(ErrorKind::kParseError, "line " + std::to_string(line_no) + ": shape out of range");
    }
    if (bits.size() != static_cast<std::size_t>(shape.tiles()) ||
        bits.find_first_not_of("01") != std::string::npos) {
      throw Error(ErrorKind::kParseError, "line " + std::to_string(line_no) + ": bad pattern '" + bits + "'");
    }
    double v = 0.0;
    const auto* first = value_text.data();
    const auto* last = first + value_text.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last || !std::isfinite(v) || v <= 0.0) {
      throw Error(ErrorKind::kParseError, "line " + std::to_string(line_no) + ": bad value '" + value_text + "'");
    }
    const std::uint32_t pattern = static_cast<std::uint32_t>(std::stoul(bits, nullptr, 2));
    auto& vals = values[shape];
    auto& mark = seen[shape];
    if (vals.empty()) {
      vals.assign(std::size_t{1} << shape.tiles(), 0.0);
      mark.assign(vals.size(), false);
    }
    if (mark[pattern]) {
      throw Error(ErrorKind::kParseError, "line " + std::to_string(line_no) + ": duplicate entry " +
                                              shape_name(shape) + " " + bits);
    }
    mark[pattern] = true;
    vals[pattern] = v;
  }

  std::vector<std::string> missing;
  auto complete = [&](BlockShape s) {
    auto it = seen.find(s);
    return it != seen.end() && std::all_of(it->second.begin(), it->second.end(), [](bool b) { return b; });
  };
  for (const auto& s : required) {
    if (!complete(s)) missing.push_back(shape_name(s));
  }
  for (const auto& kv : seen) {
    if (!complete(kv.first) && std::find(required.begin(), required.end(), kv.first) == required.end()) {
      missing.push_back(shape_name(kv.first) + " (partial)");
    }
  }
  if (!missing.empty()) {
    std::string msg = "missing shapes:";
    for (const auto& m : missing) msg += " " + m;
    throw Error(ErrorKind::kIncompleteCoverage, msg);
  }
  return CtmTable(provenance, source, std::move(values));
}

CtmTable load_ctm_table(const std::filesystem::path& path, const std::vector<BlockShape>& required) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIoError, "cannot open " + path.string());
  return load_ctm_table(in, required);
}

CtmTable surrogate_ctm_table(const std::vector<BlockShape>& shapes) {
  std::map<BlockShape, std::vector<double>> values;
  for (const auto& shape : shapes) {
    const int n = shape.tiles();
    const std::uint32_t count = std::uint32_t{1} << n;
    std::vector<double> score(count);
    for (std::uint32_t p = 0; p < count; ++p) {
      auto tile = [&](int r, int c) { return (p >> (n - 1 - (r * shape.cols + c))) & 1U; };
      const int red = std::popcount(p);
      const double q = static_cast<double>(red) / n;
      const double h = (red == 0 || red == n) ? 0.0 : -(q * std::log2(q) + (1 - q) * std::log2(1 - q));
      int pairs = 0;
      int changes = 0;
      for (int r = 0; r < shape.rows; ++r) {
        for (int c = 0; c < shape.cols; ++c) {
          if (c + 1 < shape.cols) {
            ++pairs;
            changes += tile(r, c) != tile(r, c + 1);
          }
          if (r + 1 < shape.rows) {
            ++pairs;
            changes += tile(r, c) != tile(r + 1, c);
          }
        }
      }
      const double transitions = pairs == 0 ? 0.0 : static_cast<double>(changes) / pairs;
      score[p] = n * (h + transitions) / 2.0;
    }
    // Rank-based tie-breaking: equal scores are separated by pattern order
    // (all-white first), scaled well below the smallest score gap.
    std::vector<std::uint32_t> order(count);
    std::iota(order.begin(), order.end(), 0U);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return score[a] < score[b]; });
    std::vector<double> vals(count);
    const double base = 1.0 + std::log2(static_cast<double>(n) + 1.0);
    for (std::uint32_t rank = 0; rank < count; ++rank) {
      vals[order[rank]] = base + score[order[rank]] + 1e-6 * rank / count;
    }
    values.emplace(shape, std::move(vals));
  }
  return CtmTable(CtmProvenance::kSurrogate, "entropy-transition-v1", std::move(values));
}

}  // namespace srp
