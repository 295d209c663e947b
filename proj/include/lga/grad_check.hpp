#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lga/tape.hpp"

namespace lga {

// Builds a scalar graph over a single gradient-requiring leaf holding `point`.
// Must be deterministic: the same point must yield the same graph and values.
using ScalarGraphBuilder = std::function<NodeId(Tape&, NodeId point_leaf)>;

struct CoordCheck {
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
  bool skipped = false;  // perturbation crossed a relu/max kink
  bool passed = true;
};

struct GradCheckReport {
  std::vector<CoordCheck> coords;
  double max_rel_error = 0.0;  // over non-skipped coordinates
  std::size_t skipped = 0;
  bool passed = true;
};

// Central-difference check of the analytic gradient of builder(point) with
// step h per coordinate. Relative error is |a-n| / max(1, |a|). Coordinates
// whose +/-h evaluations change any relu/max branch are reported as skipped.
GradCheckReport grad_check(const ScalarGraphBuilder& builder, const Tensor& point,
                           double step, double tolerance);

}  // namespace lga
