#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "lga/grad_check.hpp"
#include "lga/gradcheck_suite.hpp"
#include "lga/rng.hpp"
#include "lga/tape.hpp"

using namespace lga;

TEST_CASE("tensor construction") {
  Tensor id({2, 2}, {1, 0, 0, 1});
  CHECK(id.size() == 4);
  CHECK(id[0] == 1.0);
  CHECK(id[3] == 1.0);

  CHECK_THROWS_AS(Tensor({3}, {1, 2}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({2}, {1.0, std::nan("")}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({2}, {1.0, INFINITY}), std::invalid_argument);

  // RoI-shaped tensor: 32*7*7 = 1568 values
  std::vector<double> v(1568, 0.5);
  Tensor roi({32, 7, 7}, std::move(v));
  CHECK(roi.shape() == std::vector<std::size_t>{32, 7, 7});
  CHECK(roi.size() == 1568);
}

TEST_CASE("forward op examples") {
  Tape t;
  NodeId z = t.leaf(Tensor::zeros({2, 3}));
  NodeId tz = t.tanh(z);
  for (std::size_t i = 0; i < 6; ++i) CHECK(t.value(tz)[i] == 0.0);

  NodeId a = t.leaf(Tensor({2, 2}, {1, 2, 3, 4}));
  NodeId eye = t.leaf(Tensor({2, 2}, {1, 0, 0, 1}));
  NodeId prod = t.matmul(a, eye);
  for (std::size_t i = 0; i < 4; ++i) CHECK(t.value(prod)[i] == t.value(a)[i]);

  NodeId e = t.exp(t.leaf(Tensor({2}, {0, 1})));
  CHECK(t.value(e)[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(t.value(e)[1] == doctest::Approx(2.718281828459045).epsilon(1e-15));
}

TEST_CASE("op error paths") {
  Tape t;
  NodeId a = t.leaf(Tensor::zeros({2, 3}));
  NodeId b = t.leaf(Tensor::zeros({3, 2}));
  CHECK_THROWS_AS(t.add(a, b), std::invalid_argument);
  CHECK_THROWS_AS(t.matmul(a, a), std::invalid_argument);
  CHECK_THROWS_AS(t.sum(a, 5), std::invalid_argument);
  CHECK_THROWS_AS(t.concat({a, b}, 0), std::invalid_argument);
  CHECK_THROWS_AS(t.reshape(a, {7}), std::invalid_argument);
  CHECK_THROWS_AS(t.apply(Op::Add, {a, NodeId(999)}), std::invalid_argument);
}

TEST_CASE("broadcasting over trailing axes") {
  Tape t;
  NodeId x = t.leaf(Tensor({2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8}));
  NodeId m = t.leaf(Tensor({2, 2}, {1, 0, 0, 1}));
  NodeId y = t.mul(x, m);
  std::vector<double> want = {1, 0, 0, 4, 5, 0, 0, 8};
  for (std::size_t i = 0; i < 8; ++i) CHECK(t.value(y)[i] == want[i]);

  NodeId col = t.leaf(Tensor({2, 1}, {10, 20}));
  NodeId mat = t.leaf(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
  NodeId s = t.add(mat, col);
  std::vector<double> want2 = {11, 12, 13, 24, 25, 26};
  for (std::size_t i = 0; i < 6; ++i) CHECK(t.value(s)[i] == want2[i]);
}

TEST_CASE("backward examples") {
  {
    Tape t;
    NodeId x = t.leaf(Tensor::scalar(0.0), true);
    NodeId y = t.tanh(x);
    GradientMap g = t.backward(y);
    CHECK(g.at(x)[0] == doctest::Approx(1.0).epsilon(1e-15));
  }
  {
    Tape t;
    NodeId x = t.leaf(Tensor({3}, {1, 2, 3}), true);
    NodeId y = t.sum(t.mul(x, x));
    GradientMap g = t.backward(y);
    CHECK(g.at(x)[0] == 2.0);
    CHECK(g.at(x)[1] == 4.0);
    CHECK(g.at(x)[2] == 6.0);
  }
  {
    Tape t;
    NodeId x = t.leaf(Tensor({3}, {1, 2, 3}), true);
    CHECK_THROWS_AS(t.backward(x), std::invalid_argument);       // non-scalar root
    CHECK_THROWS_AS(t.backward(NodeId(42)), std::invalid_argument);  // not on tape
  }
}

TEST_CASE("adjoint additivity under fan-out") {
  Tensor c1({3}, {0.5, -1.0, 2.0});
  Tensor c2({3}, {1.5, 0.25, -0.75});
  Tape t;
  NodeId x = t.leaf(Tensor({3}, {0.1, 0.2, 0.3}), true);
  NodeId y = t.add(t.sum(t.mul(x, t.leaf(c1))), t.sum(t.mul(x, t.leaf(c2))));
  GradientMap g = t.backward(y);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(g.at(x)[i] == doctest::Approx(c1[i] + c2[i]).epsilon(1e-15));
}

TEST_CASE("softmax cross entropy") {
  {
    Tape t;
    NodeId l = t.leaf(Tensor({4}, {0.7, 0.7, 0.7, 0.7}));
    NodeId ce = softmax_cross_entropy(t, l, 1);
    CHECK(t.value(ce).item() == doctest::Approx(std::log(4.0)).epsilon(1e-14));
  }
  {
    Tape t;
    NodeId l = t.leaf(Tensor({4}, {100, 0, 0, 0}));
    NodeId ce = softmax_cross_entropy(t, l, 0);
    CHECK(t.value(ce).item() < 1e-40);
  }
  {
    Tape t;
    NodeId l = t.leaf(Tensor({3}, {1, 2, 3}));
    NodeId ce = softmax_cross_entropy(t, l, 2);
    CHECK(t.value(ce).item() == doctest::Approx(0.40760596444438).epsilon(1e-12));
  }
  {
    Tape t;
    NodeId l = t.leaf(Tensor({3}, {1, 2, 3}));
    CHECK_THROWS_AS(softmax_cross_entropy(t, l, 3), std::invalid_argument);
    CHECK_THROWS_AS(softmax_cross_entropy(t, l, -1), std::invalid_argument);
  }
}

TEST_CASE("softmax recovered from CE adjoint sums to 1") {
  Xoshiro256 rng(7);
  for (int rep = 0; rep < 10; ++rep) {
    std::vector<double> logits(5);
    for (double& v : logits) v = rng.uniform(-4.0, 4.0);
    Tape t;
    NodeId l = t.leaf(Tensor({5}, logits), true);
    NodeId ce = softmax_cross_entropy(t, l, 2);
    GradientMap g = t.backward(ce);
    double total = 0.0;
    for (std::size_t i = 0; i < 5; ++i)
      total += g.at(l)[i] + (i == 2 ? 1.0 : 0.0);  // softmax_i = adjoint_i + onehot_i
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("smooth l1") {
  auto eval = [](std::vector<double> pred, double beta) {
    Tape t;
    NodeId p = t.leaf(Tensor({4}, std::move(pred)));
    return t.value(smooth_l1(t, p, Tensor::zeros({4}), beta)).item();
  };
  CHECK(eval({0, 0, 0, 0}, 1.0) == 0.0);
  CHECK(eval({0.5, 0, 0, 0}, 1.0) == doctest::Approx(0.125).epsilon(1e-15));
  CHECK(eval({2, 0, 0, 0}, 1.0) == doctest::Approx(1.5).epsilon(1e-15));
  Tape t;
  NodeId p = t.leaf(Tensor::zeros({4}));
  CHECK_THROWS_AS(smooth_l1(t, p, Tensor::zeros({4}), 0.0), std::invalid_argument);
}

TEST_CASE("grad_check examples") {
  auto sum_builder = [](Tape& t, NodeId x) { return t.sum(x); };
  GradCheckReport r1 = grad_check(sum_builder, Tensor({3}, {0.4, -1.2, 2.2}), 1e-5, 1e-6);
  CHECK(r1.passed);
  CHECK(r1.max_rel_error < 1e-9);
  for (const auto& c : r1.coords) CHECK(c.analytic == 1.0);

  auto tanh_builder = [](Tape& t, NodeId x) { return t.sum(t.tanh(x)); };
  GradCheckReport r2 = grad_check(tanh_builder, Tensor({2}, {0.3, -0.7}), 1e-5, 1e-6);
  CHECK(r2.passed);
  CHECK(r2.max_rel_error <= 1e-8);

  auto relu_builder = [](Tape& t, NodeId x) { return t.sum(t.relu(x)); };
  GradCheckReport r3 = grad_check(relu_builder, Tensor({3}, {1.0, 0.0, -1.0}), 1e-5, 1e-6);
  CHECK(r3.coords[1].skipped);
  CHECK(r3.skipped == 1);
  CHECK(r3.passed);

  auto bad_builder = [](Tape& t, NodeId x) { return t.mul(x, x); };
  CHECK_THROWS_AS(grad_check(bad_builder, Tensor({3}, {1, 2, 3}), 1e-5, 1e-6),
                  std::invalid_argument);
}

TEST_CASE("gradient correctness for every op kind") {
  std::vector<SuiteRow> rows = gradcheck_suite(123, 1e-6);
  CHECK(rows.size() == 21);  // 20 op kinds + end-to-end
  for (const SuiteRow& r : rows) {
    INFO(r.name, " max_rel_error=", r.max_rel_error);
    CHECK(r.passed);
  }
}

TEST_CASE("tape replay determinism") {
  auto build = [] {
    Tape t;
    NodeId x = t.leaf(Tensor({2, 3}, {0.1, -0.4, 1.7, 0.9, -1.1, 0.3}), true);
    NodeId w = t.leaf(Tensor({3, 2}, {1, 2, 3, 4, 5, 6}));
    NodeId y = t.sum(t.tanh(t.matmul(x, w)));
    GradientMap g = t.backward(y);
    return std::make_pair(t.value(y).item(), g.begin()->second.vec());
  };
  auto [v1, g1] = build();
  auto [v2, g2] = build();
  CHECK(std::memcmp(&v1, &v2, sizeof(double)) == 0);
  REQUIRE(g1.size() == g2.size());
  CHECK(std::memcmp(g1.data(), g2.data(), g1.size() * sizeof(double)) == 0);
}

TEST_CASE("backward does not mutate the tape and accumulates over repeat calls") {
  Tape t;
  NodeId x = t.leaf(Tensor({2}, {0.5, -0.25}), true);
  NodeId y = t.sum(t.square(x));
  GradientMap g1 = t.backward(y);
  GradientMap g2 = t.backward(y);
  CHECK(g1.at(x)[0] == g2.at(x)[0]);
  CHECK(g1.at(x)[1] == g2.at(x)[1]);
  CHECK(t.value(y).item() == doctest::Approx(0.3125).epsilon(1e-15));
}
