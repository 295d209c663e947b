#include "lga/grad_check.hpp"

#include <cmath>
#include <stdexcept>

namespace lga {

namespace {

struct Eval {
  double value;
  std::vector<std::uint8_t> pattern;
};

Eval evaluate(const ScalarGraphBuilder& builder, const Tensor& point) {
  Tape tape;
  NodeId x = tape.leaf(point, true);
  NodeId root = builder(tape, x);
  if (!tape.value(root).is_scalar())
    throw std::invalid_argument("grad_check: builder produced a non-scalar root");
  return Eval{tape.value(root).item(), tape.activation_pattern()};
}

}  // namespace

GradCheckReport grad_check(const ScalarGraphBuilder& builder, const Tensor& point,
                           double step, double tolerance) {
  if (step <= 0.0) throw std::invalid_argument("grad_check: step must be positive");

  Tape tape;
  NodeId x = tape.leaf(point, true);
  NodeId root = builder(tape, x);
  if (!tape.value(root).is_scalar())
    throw std::invalid_argument("grad_check: builder produced a non-scalar root");
  GradientMap grads = tape.backward(root);
  const Tensor& analytic = grads.at(x);
  std::vector<std::uint8_t> base_pattern = tape.activation_pattern();

  GradCheckReport report;
  report.coords.resize(point.size());

  std::vector<double> buf(point.vec());
  for (std::size_t i = 0; i < point.size(); ++i) {
    CoordCheck& c = report.coords[i];
    c.analytic = analytic[i];

    double orig = buf[i];
    buf[i] = orig + step;
    Eval plus = evaluate(builder, Tensor(point.shape(), buf));
    buf[i] = orig - step;
    Eval minus = evaluate(builder, Tensor(point.shape(), buf));
    buf[i] = orig;

    if (plus.pattern != base_pattern || minus.pattern != base_pattern) {
      c.skipped = true;
      report.skipped++;
      continue;
    }
    c.numeric = (plus.value - minus.value) / (2.0 * step);
    c.rel_error = std::abs(c.analytic - c.numeric) / std::max(1.0, std::abs(c.analytic));
    c.passed = c.rel_error <= tolerance;
    report.max_rel_error = std::max(report.max_rel_error, c.rel_error);
    if (!c.passed) report.passed = false;
  }
  return report;
}

}  // namespace lga
