#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lga {

struct SuiteRow {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t skipped = 0;
  bool passed = true;
};

// One row per primitive op kind, checked at `points` random points each, plus
// one end-to-end total-loss row on a tiny model (C=4, k=2, 3 classes) covering
// every weight group.
std::vector<SuiteRow> gradcheck_suite(std::uint64_t seed, double tolerance,
                                      std::size_t points = 20, double step = 1e-5);

}  // namespace lga
