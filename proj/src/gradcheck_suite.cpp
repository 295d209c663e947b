#include "lga/gradcheck_suite.hpp"

#include <cmath>

#include "lga/grad_check.hpp"
#include "lga/model.hpp"
#include "lga/rng.hpp"

namespace lga {

namespace {

// Values in [-2,2], displaced at least min_abs from 0 so relu kinks stay clear.
Tensor random_point(Xoshiro256& rng, std::vector<std::size_t> shape, double min_abs = 1e-3) {
  std::size_t n = Tensor::extent_product(shape);
  std::vector<double> v(n);
  for (double& x : v) {
    do {
      x = rng.uniform(-2.0, 2.0);
    } while (std::abs(x) < min_abs);
  }
  return Tensor(std::move(shape), std::move(v));
}

struct OpCase {
  std::string name;
  std::vector<std::size_t> point_shape;
  ScalarGraphBuilder build;
  double min_abs = 1e-3;  // divide needs the denominator well away from 0
};

// Reduce any output to a scalar through a smooth probe so the checked op's
// adjoint actually participates in the end value.
NodeId probe(Tape& t, NodeId v, NodeId weights) { return t.sum(t.mul(v, weights)); }

}  // namespace

std::vector<SuiteRow> gradcheck_suite(std::uint64_t seed, double tolerance,
                                      std::size_t points, double step) {
  Xoshiro256 rng(seed);

  // Fixed companions shared by all points of one case.
  Tensor other23 = random_point(rng, {2, 3});
  Tensor mat34 = random_point(rng, {3, 4});
  Tensor w23 = random_point(rng, {2, 3});
  Tensor w24 = random_point(rng, {2, 4});
  Tensor w223 = random_point(rng, {2, 2, 3});
  Tensor w43 = random_point(rng, {4, 3});
  Tensor w3 = random_point(rng, {3});
  Tensor target({4}, {0.3, -0.2, 1.7, 0.0});

  auto lift = [](Tensor t) {
    return [t](Tape& tape) { return tape.leaf(t); };
  };
  auto o23 = lift(other23);
  auto m34 = lift(mat34);
  auto pw23 = lift(w23);
  auto pw24 = lift(w24);
  auto pw223 = lift(w223);
  auto pw43 = lift(w43);
  auto pw3 = lift(w3);

  std::vector<OpCase> cases = {
      {"add", {2, 3}, [=](Tape& t, NodeId x) { return probe(t, t.add(x, o23(t)), pw23(t)); }},
      {"subtract", {2, 3}, [=](Tape& t, NodeId x) { return probe(t, t.sub(x, o23(t)), pw23(t)); }},
      {"multiply", {2, 3}, [=](Tape& t, NodeId x) { return probe(t, t.mul(x, o23(t)), pw23(t)); }},
      {"divide", {2, 3}, [=](Tape& t, NodeId x) { return probe(t, t.div(o23(t), x), pw23(t)); }, 0.5},
      {"matmul", {2, 3}, [=](Tape& t, NodeId x) { return probe(t, t.matmul(x, m34(t)), pw24(t)); }},
      {"scale", {2, 3}, [=](Tape& t, NodeId x) { return probe(t, t.scale(x, 1.7), pw23(t)); }},
      {"add-constant", {2, 3}, [=](Tape& t, NodeId x) { return probe(t, t.add_const(x, -0.4), pw23(t)); }},
      {"negate", {2, 3}, [=](Tape& t, NodeId x) { return probe(t, t.neg(x), pw23(t)); }},
      {"exp", {2, 3}, [=](Tape& t, NodeId x) { return probe(t, t.exp(x), pw23(t)); }},
      {"tanh", {2, 3}, [=](Tape& t, NodeId x) { return probe(t, t.tanh(x), pw23(t)); }},
      {"relu", {2, 3}, [=](Tape& t, NodeId x) { return probe(t, t.relu(x), pw23(t)); }},
      {"square", {2, 3}, [=](Tape& t, NodeId x) { return probe(t, t.square(x), pw23(t)); }},
      {"sum", {2, 3}, [=](Tape& t, NodeId x) { return probe(t, t.sum(x, 1), t.leaf(Tensor({2}, {1.3, -0.7}))); }},
      {"mean", {2, 3}, [=](Tape& t, NodeId x) { return probe(t, t.mean(x, 0), pw3(t)); }},
      {"reshape", {2, 3}, [=](Tape& t, NodeId x) { return probe(t, t.reshape(x, {3, 2}), t.leaf(w23.reshaped({3, 2}))); }},
      {"concat", {2, 3}, [=](Tape& t, NodeId x) { return probe(t, t.concat({x, o23(t)}, 0), pw43(t)); }},
      {"broadcast-to", {2, 3}, [=](Tape& t, NodeId x) { return probe(t, t.broadcast_to(x, {2, 2, 3}), pw223(t)); }},
      {"max", {2, 3}, [=](Tape& t, NodeId x) { return probe(t, t.maximum(x, o23(t)), pw23(t)); }},
      {"softmax-cross-entropy", {4}, [](Tape& t, NodeId x) { return softmax_cross_entropy(t, x, 2); }},
      {"smooth-l1", {4}, [=](Tape& t, NodeId x) { return smooth_l1(t, x, target, 1.0); }},
  };

  std::vector<SuiteRow> rows;
  for (const OpCase& c : cases) {
    SuiteRow row;
    row.name = c.name;
    for (std::size_t p = 0; p < points; ++p) {
      Tensor point = random_point(rng, c.point_shape, c.min_abs);
      GradCheckReport r = grad_check(c.build, point, step, tolerance);
      row.max_rel_error = std::max(row.max_rel_error, r.max_rel_error);
      row.skipped += r.skipped;
      row.passed = row.passed && r.passed;
    }
    rows.push_back(row);
  }

  // End-to-end: total loss of a tiny model, one check per weight group.
  LgaConfig cfg;
  cfg.channels = 4;
  cfg.masks = 2;
  cfg.classes = 3;
  cfg.hidden = 6;
  cfg.down_channels = 2;
  LgaModel model = init_model(cfg, rng.next_u64());
  // Put the mask heads off their zero init so mu/sigma gradients are generic.
  model.for_each_weight([&](const char* name, Tensor& t) {
    if (LgaModel::is_mask_weight(name)) {
      std::vector<double> v(t.vec());
      for (double& x : v) x += 0.3 * rng.normal();
      t = Tensor(t.shape(), std::move(v));
    }
  });
  Tensor x = random_point(rng, {cfg.channels, cfg.height, cfg.width});
  int label = static_cast<int>(rng.below(cfg.classes));

  SuiteRow e2e;
  e2e.name = "end-to-end-total-loss";
  for (const std::string& name : LgaModel::weight_names()) {
    Tensor point = model.weight(name);
    auto build = [&, name](Tape& t, NodeId leaf) {
      ForwardGraph g = forward_with_weight_leaf(t, model, x, true, name, leaf);
      return total_loss(t, g, label, target, cfg).total;
    };
    GradCheckReport r = grad_check(build, point, step, tolerance);
    e2e.max_rel_error = std::max(e2e.max_rel_error, r.max_rel_error);
    e2e.skipped += r.skipped;
    e2e.passed = e2e.passed && r.passed;
  }
  rows.push_back(e2e);
  return rows;
}

}  // namespace lga
