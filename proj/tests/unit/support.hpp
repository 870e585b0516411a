#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "srp/error.hpp"
#include "srp/grid.hpp"

namespace srp::test {

inline std::filesystem::path data_dir() { return SRP_TEST_DATA; }
inline std::filesystem::path repo_data_dir() { return SRP_REPO_DATA; }

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("srp-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

struct BdmReference {
  Grid board;
  double bdm = 0.0;
};

inline std::vector<BdmReference> load_bdm_reference() {
  std::ifstream in(data_dir() / "bdm_reference_7x7.txt");
  std::vector<BdmReference> out;
  std::string line, rows;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (line == "board") {
      rows.clear();
    } else if (line.rfind("bdm ", 0) == 0) {
      out.push_back({parse_grid(rows), std::stod(line.substr(4))});
    } else {
      rows += line + "\n";
    }
  }
  return out;
}

}  // namespace srp::test

#define CHECK_THROWS_KIND(expr, k)                    \
  do {                                                \
    bool srp_thrown_ = false;                         \
    try {                                             \
      (void)(expr);                                   \
    } catch (const ::srp::Error& e) {                 \
      srp_thrown_ = true;                             \
      CHECK_MESSAGE(e.kind() == (k), e.what());       \
    }                                                 \
    CHECK_MESSAGE(srp_thrown_, "expected srp::Error"); \
  } while (0)
