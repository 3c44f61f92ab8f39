#include <doctest.h>

#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "phasen/ndgrad/grad_check.hpp"
#include "phasen/ndgrad/graph.hpp"
#include "phasen/ndgrad/ops.hpp"
#include "phasen/ndgrad/tensor.hpp"

using namespace phasen::ndgrad;
using Fn = std::function<Tensor<double>(Graph<double>&, const Tensor<double>&)>;

namespace {

Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0,
                             double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<double> t(std::move(shape));
  for (double& v : t.mutable_data()) v = u(rng);
  return t;
}

// Weighted sum so every output element gets a distinct upstream gradient.
Tensor<double> project(Graph<double>& g, const Tensor<double>& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor<double> w = random_tensor(y.shape(), rng);
  return sum(g, mul(g, y, w));
}

constexpr double kTol = 1e-4;
constexpr int kPoints = 100;

// Runs `f` at kPoints random inputs of the given shape and returns the worst error.
double worst_error(const Fn& f, const Shape& shape, std::uint64_t seed, double lo = -1.0,
                   double hi = 1.0) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (int p = 0; p < kPoints; ++p) {
    const auto x = random_tensor(shape, rng, lo, hi);
    GradCheckOptions o;
    o.seed = seed + static_cast<std::uint64_t>(p);
    worst = std::max(worst, grad_check<double>(f, x, o).max_rel_error);
  }
  return worst;
}

}  // namespace

TEST_CASE("backward of sum is all ones") {
  Graph<double> g;
  Tensor<double> x({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  g.backward(sum(g, x));
  for (double v : x.grad()) CHECK(v == 1.0);
}

TEST_CASE("backward of half the sum of squares is x") {
  Graph<double> g;
  Tensor<double> x({5}, {1.5, -2.0, 0.0, 3.25, -0.5}, true);
  g.backward(scale(g, sum(g, mul(g, x, x)), 0.5));
  for (std::size_t i = 0; i < 5; ++i) CHECK(x.grad()[i] == x.data()[i]);
}

TEST_CASE("backward twice on one graph is an error") {
  Graph<double> g;
  Tensor<double> x({3}, {1, 2, 3}, true);
  const auto l = sum(g, x);
  g.backward(l);
  CHECK_THROWS_AS(g.backward(l), std::logic_error);
}

TEST_CASE("backward needs a scalar loss") {
  Graph<double> g;
  Tensor<double> x({3}, {1, 2, 3}, true);
  const auto y = scale(g, x, 2.0);
  CHECK_THROWS(g.backward(y));
}

TEST_CASE("shared inputs accumulate gradient from every use") {
  Graph<double> g;
  Tensor<double> x({1, 1, 1, 2}, {2.0, -3.0}, true);
  const auto y = add(g, mul(g, x, x), scale(g, x, 4.0));
  g.backward(sum(g, y));
  CHECK(x.grad()[0] == 2 * 2.0 + 4.0);
  CHECK(x.grad()[1] == 2 * -3.0 + 4.0);
}

TEST_CASE("non-recording graphs tape nothing") {
  Graph<double> g(false);
  Tensor<double> x({2}, {1, 2}, true);
  sum(g, mul(g, x, x));
  CHECK(g.size() == 0);
}

TEST_CASE("grad_check: sum of squares") {
  std::mt19937_64 rng(1);
  const auto x = random_tensor({4, 6}, rng);
  const Fn f = [](Graph<double>& g, const Tensor<double>& v) { return sum(g, mul(g, v, v)); };
  GradCheckOptions o;
  o.step = 1e-5;
  const auto r = grad_check<double>(f, x, o);
  CHECK(r.checked == 24);
  CHECK(r.max_rel_error < 1e-7);
}

TEST_CASE("grad_check: prelu away from the kink") {
  std::mt19937_64 rng(2);
  auto x = random_tensor({1, 2, 3, 4}, rng);
  for (double& v : x.mutable_data())
    if (std::abs(v) < 10 * 1e-5) v = v < 0 ? -0.1 : 0.1;
  const Tensor<double> slope({2}, {0.25, -0.3});
  const Fn f = [&](Graph<double>& g, const Tensor<double>& v) {
    return project(g, prelu(g, v, slope), 3);
  };
  CHECK(grad_check<double>(f, x).max_rel_error < 1e-6);
}

TEST_CASE("grad_check: prelu exactly at zero is excluded") {
  const Tensor<double> x({1, 1, 1, 4}, {0.0, 0.5, 0.0, -0.5});
  const Tensor<double> slope({1}, std::vector<double>{0.25});
  const Fn f = [&](Graph<double>& g, const Tensor<double>& v) {
    return project(g, prelu(g, v, slope), 4);
  };
  GradCheckOptions o;
  o.exclude = [](std::size_t, double value) { return value == 0.0; };
  const auto r = grad_check<double>(f, x, o);
  CHECK(r.excluded == 2);
  CHECK(r.checked == 2);
  CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("grad_check rejects a non-deterministic function") {
  int calls = 0;
  const Fn f = [&](Graph<double>& g, const Tensor<double>& v) {
    ++calls;
    return scale(g, sum(g, v), 1.0 + 1e-3 * calls);
  };
  CHECK_THROWS_AS(grad_check<double>(f, Tensor<double>({3}, {1, 2, 3})), std::runtime_error);
}

TEST_CASE("grad_check catches a wrong gradient") {
  // sum(x*x) but with the taped product detached on one side.
  const Fn f = [](Graph<double>& g, const Tensor<double>& v) {
    Tensor<double> frozen = v.clone();
    frozen.set_requires_grad(false);
    return sum(g, mul(g, v, frozen));
  };
  // Value is x^2 but the analytic gradient is x, half the truth.
  CHECK(grad_check<double>(f, Tensor<double>({3}, {1, 2, 3})).max_rel_error > 0.4);
}

TEST_CASE("relative error uses the 1e-8 floor") {
  CHECK(relative_error(0.0, 0.0) == 0.0);
  CHECK(relative_error(0.0, 1e-10) == doctest::Approx(1e-2));
  CHECK(relative_error(2.0, 1.0) == doctest::Approx(0.5));
}

TEST_CASE("op gradients at 100 random points") {
  std::mt19937_64 prng(77);
  const Shape map{2, 3, 4, 5};

  SUBCASE("conv2d input and weight") {
    const auto w = random_tensor({2, 3, 3, 5}, prng);
    const auto b = random_tensor({2}, prng);
    const auto x0 = random_tensor(map, prng);
    CHECK(worst_error([&](Graph<double>& g, const Tensor<double>& v) {
            return project(g, conv2d(g, v, w, b), 1);
          }, map, 10) < kTol);
    CHECK(worst_error([&](Graph<double>& g, const Tensor<double>& v) {
            return project(g, conv2d(g, x0, v, b), 2);
          }, {2, 3, 3, 5}, 11) < kTol);
    CHECK(worst_error([&](Graph<double>& g, const Tensor<double>& v) {
            return project(g, conv2d(g, x0, w, v), 3);
          }, {2}, 12) < kTol);
  }
  SUBCASE("conv2d 1x1 path") {
    const auto w = random_tensor({4, 3, 1, 1}, prng);
    CHECK(worst_error([&](Graph<double>& g, const Tensor<double>& v) {
            return project(g, conv2d(g, v, w, Tensor<double>{}), 4);
          }, map, 13) < kTol);
  }
  SUBCASE("global layer norm") {
    const auto gamma = random_tensor({3}, prng);
    const auto beta = random_tensor({3}, prng);
    const auto x0 = random_tensor(map, prng);
    CHECK(worst_error([&](Graph<double>& g, const Tensor<double>& v) {
            return project(g, global_layer_norm(g, v, gamma, beta), 5);
          }, map, 14) < kTol);
    CHECK(worst_error([&](Graph<double>& g, const Tensor<double>& v) {
            return project(g, global_layer_norm(g, x0, v, beta), 6);
          }, {3}, 15) < kTol);
    CHECK(worst_error([&](Graph<double>& g, const Tensor<double>& v) {
            return project(g, global_layer_norm(g, x0, gamma, v), 7);
          }, {3}, 16) < kTol);
  }
  SUBCASE("batch norm in training mode") {
    const auto gamma = random_tensor({3}, prng);
    const auto beta = random_tensor({3}, prng);
    CHECK(worst_error([&](Graph<double>& g, const Tensor<double>& v) {
            BatchNormState<double> st{Tensor<double>({3}), Tensor<double>::full({3}, 1.0)};
            return project(g, batch_norm(g, v, gamma, beta, st, true), 8);
          }, map, 17) < kTol);
  }
  SUBCASE("batch norm in eval mode") {
    const auto gamma = random_tensor({3}, prng);
    CHECK(worst_error([&](Graph<double>& g, const Tensor<double>& v) {
            BatchNormState<double> st{Tensor<double>({3}, {0.1, 0.2, -0.3}),
                                      Tensor<double>({3}, {1.5, 0.5, 2.0})};
            return project(g, batch_norm(g, v, gamma, Tensor<double>({3}), st, false), 9);
          }, map, 18) < kTol);
  }
  SUBCASE("prelu input and slope") {
    const auto slope = random_tensor({3}, prng);
    // Inputs kept at least 0.05 away from the kink.
    auto away = [](const Tensor<double>& v) {
      Tensor<double> c = v.clone();
      for (double& e : c.mutable_data()) e += e < 0 ? -0.05 : 0.05;
      return c;
    };
    CHECK(worst_error([&](Graph<double>& g, const Tensor<double>& v) {
            return project(g, prelu(g, v, slope), 10);
          }, map, 19, 0.05, 1.0) < kTol);
    CHECK(worst_error([&](Graph<double>& g, const Tensor<double>& v) {
            return project(g, prelu(g, v, slope), 11);
          }, map, 20, -1.0, -0.05) < kTol);
    const auto x0 = away(random_tensor(map, prng));
    CHECK(worst_error([&](Graph<double>& g, const Tensor<double>& v) {
            return project(g, prelu(g, x0, v), 12);
          }, {3}, 21) < kTol);
  }
  SUBCASE("smooth elementwise ops") {
    const auto other = random_tensor(map, prng);
    CHECK(worst_error([&](Graph<double>& g, const Tensor<double>& v) {
            return project(g, tanh(g, v), 13);
          }, map, 22, -3.0, 3.0) < kTol);
    CHECK(worst_error([&](Graph<double>& g, const Tensor<double>& v) {
            return project(g, sigmoid(g, v), 14);
          }, map, 23, -6.0, 6.0) < kTol);
    CHECK(worst_error([&](Graph<double>& g, const Tensor<double>& v) {
            return project(g, mul(g, add(g, v, other), scale(g, v, -1.5)), 15);
          }, map, 24) < kTol);
    CHECK(worst_error([&](Graph<double>& g, const Tensor<double>& v) {
            return mse(g, v, other);
          }, map, 25) < kTol);
  }
  SUBCASE("layout ops") {
    const auto w = random_tensor({2, 1, 4, 5}, prng);
    CHECK(worst_error([&](Graph<double>& g, const Tensor<double>& v) {
            return project(g, swap_channel_height(g, v), 16);
          }, map, 26) < kTol);
    CHECK(worst_error([&](Graph<double>& g, const Tensor<double>& v) {
            return project(g, reshape(g, v, {2, 12, 1, 5}), 17);
          }, map, 27) < kTol);
    CHECK(worst_error([&](Graph<double>& g, const Tensor<double>& v) {
            return project(g, mul_channels(g, v, w), 18);
          }, map, 28) < kTol);
    const auto x0 = random_tensor(map, prng);
    CHECK(worst_error([&](Graph<double>& g, const Tensor<double>& v) {
            return project(g, mul_channels(g, x0, v), 19);
          }, {2, 1, 4, 5}, 29) < kTol);
  }
  SUBCASE("complex-bin ops") {
    const Shape spec{2, 2, 4, 5};
    CHECK(worst_error([&](Graph<double>& g, const Tensor<double>& v) {
            return project(g, magnitude(g, v), 20);
          }, spec, 30) < kTol);
    CHECK(worst_error([&](Graph<double>& g, const Tensor<double>& v) {
            return project(g, unit_normalize(g, v), 21);
          }, spec, 31) < kTol);
    CHECK(worst_error([&](Graph<double>& g, const Tensor<double>& v) {
            return project(g, power_law(g, v, 0.3), 22);
          }, {2, 1, 4, 5}, 32, 0.05, 2.0) < kTol);
  }
}

TEST_CASE("power_law gradient at zero is the clamped value") {
  Graph<double> g;
  Tensor<double> x({2}, {0.0, 1.0}, true);
  g.backward(sum(g, power_law(g, x, 0.3)));
  CHECK(x.grad()[0] == doctest::Approx(0.3 * std::pow(1e-12, -0.7)));
  CHECK(std::isfinite(x.grad()[0]));
  CHECK(x.grad()[1] == doctest::Approx(0.3));
}

TEST_CASE("replaying dependents tracks a perturbed input") {
  std::mt19937_64 rng(5);
  Tensor<double> a = random_tensor({1, 2, 3, 3}, rng);
  Tensor<double> b = random_tensor({1, 2, 3, 3}, rng);
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  Graph<double> g;
  const auto ta = tanh(g, a);
  const auto tb = sigmoid(g, b);
  const auto l = sum(g, mul(g, ta, tb));
  const double before = l.item();
  b.mutable_data()[4] += 0.5;
  const std::size_t replayed = g.replay_dependents(b);
  CHECK(replayed == 3);
  CHECK(l.item() != before);
  Graph<double> fresh(false);
  CHECK(l.item() == sum(fresh, mul(fresh, tanh(fresh, a), sigmoid(fresh, b))).item());
}

TEST_CASE("check_graph_gradients over several named tensors") {
  std::mt19937_64 rng(6);
  Tensor<double> x = random_tensor({1, 3, 5, 4}, rng);
  Tensor<double> w = random_tensor({2, 3, 3, 3}, rng);
  Tensor<double> gamma = random_tensor({2}, rng);
  Tensor<double> beta = random_tensor({2}, rng);
  for (auto* t : {&w, &gamma, &beta}) t->set_requires_grad(true);
  Graph<double> g;
  const auto y = tanh(g, global_layer_norm(g, conv2d(g, x, w, Tensor<double>{}), gamma, beta));
  const auto l = project(g, y, 9);
  g.backward(l);
  GradCheckOptions o;
  o.coords_per_tensor = 5;
  const auto report =
      check_graph_gradients<double>(g, l, {{"w", w}, {"gamma", gamma}, {"beta", beta}}, o);
  REQUIRE(report.tensors.size() == 3);
  CHECK(report.tensors[0].result.checked == 5);
  CHECK(report.tensors[1].result.checked == 2);
  CHECK(report.max_rel_error < kTol);
}

TEST_CASE("coordinates straddling a kink are redrawn") {
  // Every element sits within h of the kink, so no draw is usable.
  Tensor<double> x({1, 1, 1, 3}, {1e-7, -1e-7, 2e-7});
  const Tensor<double> slope({1}, std::vector<double>{0.25});
  const Fn f = [&](Graph<double>& g, const Tensor<double>& v) { return sum(g, prelu(g, v, slope)); };
  GradCheckOptions o;
  o.step = 1e-5;
  const auto r = grad_check<double>(f, x, o);
  CHECK(r.straddled == 3);
  CHECK(r.checked == 0);
}
