#include <doctest.h>

#include <cmath>
#include <cstddef>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "phasen/ndgrad/graph.hpp"
#include "phasen/ndgrad/ops.hpp"
#include "phasen/ndgrad/tensor.hpp"

using namespace phasen::ndgrad;

namespace {

Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0,
                             double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<double> t(std::move(shape));
  for (double& v : t.mutable_data()) v = u(rng);
  return t;
}

// Direct "same"-padded cross-correlation.
std::vector<double> conv_oracle(const Tensor<double>& x, const Tensor<double>& w,
                                const Tensor<double>& b) {
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = w.dim(0), KH = w.dim(2), KW = w.dim(3);
  const long ph = static_cast<long>(KH / 2), pw = static_cast<long>(KW / 2);
  std::vector<double> y(B * O * H * W, 0.0);
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j) {
          double acc = b.defined() ? b.data()[o] : 0.0;
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t di = 0; di < KH; ++di)
              for (std::size_t dj = 0; dj < KW; ++dj) {
                const long si = static_cast<long>(i + di) - ph;
                const long sj = static_cast<long>(j + dj) - pw;
                if (si < 0 || sj < 0 || si >= static_cast<long>(H) || sj >= static_cast<long>(W))
                  continue;
                acc += w.data()[((o * C + c) * KH + di) * KW + dj] *
                       x.data()[((n * C + c) * H + si) * W + sj];
              }
          y[((n * O + o) * H + i) * W + j] = acc;
        }
  return y;
}

double max_rel_diff(std::span<const double> got, const std::vector<double>& want) {
  double scale = 0.0, diff = 0.0;
  for (std::size_t i = 0; i < want.size(); ++i) {
    scale = std::max(scale, std::abs(want[i]));
    diff = std::max(diff, std::abs(got[i] - want[i]));
  }
  return diff / std::max(scale, 1e-300);
}

}  // namespace

TEST_CASE("tensor basics") {
  Tensor<double> t({2, 3});
  CHECK(t.numel() == 6);
  CHECK(t.rank() == 2);
  for (double v : t.data()) CHECK(v == 0.0);
  CHECK(!t.has_grad());
  CHECK(t.grad().empty());
  t.mutable_grad()[1] = 4.0;
  CHECK(t.has_grad());
  CHECK(t.grad().size() == 6);

  Tensor<double> alias = t;
  alias.mutable_data()[0] = 3.0;
  CHECK(t.data()[0] == 3.0);
  Tensor<double> copy = t.clone();
  copy.mutable_data()[0] = 5.0;
  CHECK(t.data()[0] == 3.0);

  CHECK_THROWS_AS(Tensor<double>({2, 0}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor<double>({2, 2}, std::vector<double>(3)), std::invalid_argument);
  CHECK(Tensor<double>::scalar(2.5).item() == 2.5);
}

TEST_CASE("require_finite names the op") {
  std::vector<double> v{1.0, NAN};
  try {
    require_finite<double>("myop", v);
    FAIL("expected throw");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("myop") != std::string::npos);
  }
}

TEST_CASE("conv2d: 1x1 scaling of a ones map") {
  Graph<double> g(false);
  const auto x = Tensor<double>::full({1, 1, 3, 3}, 1.0);
  const Tensor<double> w({1, 1, 1, 1}, std::vector<double>{2.0});
  const Tensor<double> b({1}, std::vector<double>{0.0});
  const auto y = conv2d(g, x, w, b);
  CHECK(y.shape() == Shape{1, 1, 3, 3});
  for (double v : y.data()) CHECK(v == 2.0);
}

TEST_CASE("conv2d: impulse response imprints the kernel") {
  Graph<double> g(false);
  Tensor<double> x({1, 1, 5, 5});
  x.mutable_data()[12] = 1.0;
  std::vector<double> k(9);
  for (std::size_t i = 0; i < 9; ++i) k[i] = static_cast<double>(i + 1) / 9.0;
  const Tensor<double> w({1, 1, 3, 3}, k);
  const auto y = conv2d(g, x, w, Tensor<double>{});
  // Cross-correlation places the kernel flipped around the impulse.
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(y.data()[(1 + i) * 5 + (1 + j)] == doctest::Approx(k[(2 - i) * 3 + (2 - j)]));
  CHECK(y.data()[0] == 0.0);

  const Tensor<double> avg({1, 1, 3, 3}, std::vector<double>(9, 1.0 / 9.0));
  const auto ya = conv2d(g, x, avg, Tensor<double>{});
  double total = 0.0;
  for (double v : ya.data()) total += v;
  CHECK(total == doctest::Approx(1.0));
  CHECK(ya.data()[12] == doctest::Approx(1.0 / 9.0));
}

TEST_CASE("conv2d: matches the nested-loop oracle on 4x7x9 with a 5x4x3x5 kernel") {
  std::mt19937_64 rng(1);
  const auto x = random_tensor({1, 4, 7, 9}, rng);
  const auto w = random_tensor({5, 4, 3, 5}, rng);
  const auto b = random_tensor({5}, rng);
  Graph<double> g(false);
  const auto y = conv2d(g, x, w, b);
  CHECK(max_rel_diff(y.data(), conv_oracle(x, w, b)) < 1e-10);
}

TEST_CASE("conv2d: oracle agreement on random shapes up to 8 per dim") {
  std::mt19937_64 rng(2);
  auto dim = [&](std::size_t hi) { return 1 + static_cast<std::size_t>(rng() % hi); };
  auto odd = [&](std::size_t hi) { return 1 + 2 * static_cast<std::size_t>(rng() % ((hi + 1) / 2)); };
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t B = dim(3), C = dim(8), O = dim(8), H = dim(8), W = dim(8);
    const std::size_t KH = odd(7), KW = odd(7);
    const auto x = random_tensor({B, C, H, W}, rng);
    const auto w = random_tensor({O, C, KH, KW}, rng);
    const Tensor<double> b = (trial % 3 == 0) ? Tensor<double>{} : random_tensor({O}, rng);
    Graph<double> g(false);
    const auto y = conv2d(g, x, w, b);
    INFO("B=" << B << " C=" << C << " O=" << O << " H=" << H << " W=" << W << " k=" << KH << "x"
              << KW);
    REQUIRE(y.shape() == Shape{B, O, H, W});
    CHECK(max_rel_diff(y.data(), conv_oracle(x, w, b)) < 1e-10);
  }
}

TEST_CASE("conv2d: float path tracks the double oracle") {
  std::mt19937_64 rng(3);
  const auto x = random_tensor({2, 6, 17, 11}, rng);
  const auto w = random_tensor({4, 6, 5, 3}, rng);
  const auto b = random_tensor({4}, rng);
  auto to_f = [](const Tensor<double>& t) {
    Tensor<float> f(t.shape());
    for (std::size_t i = 0; i < t.numel(); ++i) f.mutable_data()[i] = static_cast<float>(t.data()[i]);
    return f;
  };
  Graph<float> g(false);
  const auto y = conv2d(g, to_f(x), to_f(w), to_f(b));
  const auto want = conv_oracle(x, w, b);
  std::vector<double> got(y.data().begin(), y.data().end());
  CHECK(max_rel_diff(got, want) < 1e-5);
}

TEST_CASE("conv2d: shape errors name the op and shapes") {
  Graph<double> g(false);
  const Tensor<double> x({1, 3, 4, 4});
  const Tensor<double> w({2, 4, 3, 3});
  try {
    conv2d(g, x, w, Tensor<double>{});
    FAIL("expected throw");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("conv2d") != std::string::npos);
    CHECK(msg.find("[2x4x3x3]") != std::string::npos);
  }
  CHECK_THROWS_AS(conv2d(g, x, Tensor<double>({2, 3, 2, 3}), Tensor<double>{}),
                  std::invalid_argument);
}

TEST_CASE("global_layer_norm: constant input gives zeros") {
  Graph<double> g(false);
  const auto x = Tensor<double>::full({1, 2, 3, 4}, 7.5);
  const auto y = global_layer_norm(g, x, Tensor<double>::full({2}, 1.0), Tensor<double>({2}));
  for (double v : y.data()) CHECK(v == 0.0);
}

TEST_CASE("global_layer_norm: standardized input passes through") {
  std::mt19937_64 rng(4);
  auto x = random_tensor({1, 3, 4, 5}, rng);
  double mean = 0.0, var = 0.0;
  for (double v : x.data()) mean += v;
  mean /= 60.0;
  for (double v : x.data()) var += (v - mean) * (v - mean);
  var /= 60.0;
  for (double& v : x.mutable_data()) v = (v - mean) / std::sqrt(var);
  Graph<double> g(false);
  const auto y = global_layer_norm(g, x, Tensor<double>::full({3}, 1.0), Tensor<double>({3}));
  for (std::size_t i = 0; i < 60; ++i) CHECK(std::abs(y.data()[i] - x.data()[i]) < 1e-6);
}

TEST_CASE("global_layer_norm: statistics over channel, freq and time jointly per sample") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const double spread = 0.01 + static_cast<double>(trial);
    const auto x = random_tensor({2, 3, 4, 5}, rng, -spread, 3.0 * spread);
    Graph<double> g(false);
    const auto y = global_layer_norm(g, x, Tensor<double>::full({3}, 1.0), Tensor<double>({3}));
    for (std::size_t b = 0; b < 2; ++b) {
      double xm = 0.0, xv = 0.0, ym = 0.0, yv = 0.0;
      for (std::size_t i = 0; i < 60; ++i) {
        xm += x.data()[b * 60 + i];
        ym += y.data()[b * 60 + i];
      }
      xm /= 60.0;
      ym /= 60.0;
      for (std::size_t i = 0; i < 60; ++i) {
        xv += std::pow(x.data()[b * 60 + i] - xm, 2);
        yv += std::pow(y.data()[b * 60 + i] - ym, 2);
      }
      xv /= 60.0;
      yv /= 60.0;
      CHECK(std::abs(ym) < 1e-6);
      CHECK(std::abs(yv - xv / (xv + kNormEps)) < 1e-5);
    }
  }
}

TEST_CASE("global_layer_norm: samples in a batch never share statistics") {
  std::mt19937_64 rng(6);
  const auto a = random_tensor({1, 2, 3, 3}, rng);
  auto both = Tensor<double>({2, 2, 3, 3});
  for (std::size_t i = 0; i < 18; ++i) {
    both.mutable_data()[i] = a.data()[i];
    both.mutable_data()[18 + i] = 100.0 * a.data()[i] + 50.0;
  }
  Graph<double> g(false);
  const auto gamma = Tensor<double>({2}, {1.0, 2.0});
  const auto beta = Tensor<double>({2}, {0.5, -0.5});
  const auto ya = global_layer_norm(g, a, gamma, beta);
  const auto yb = global_layer_norm(g, both, gamma, beta);
  for (std::size_t i = 0; i < 18; ++i) {
    CHECK(yb.data()[i] == doctest::Approx(ya.data()[i]).epsilon(1e-12));
    CHECK(yb.data()[18 + i] == doctest::Approx(ya.data()[i]).epsilon(1e-6));
  }
}

TEST_CASE("batch_norm: identical constant maps normalize to zero") {
  Graph<double> g(false);
  BatchNormState<double> st{Tensor<double>({2}), Tensor<double>::full({2}, 1.0)};
  const auto x = Tensor<double>::full({3, 2, 4, 4}, -2.0);
  const auto y = batch_norm(g, x, Tensor<double>::full({2}, 1.0), Tensor<double>({2}), st, true);
  for (double v : y.data()) CHECK(v == 0.0);
}

TEST_CASE("batch_norm: beta shifts pre-normalized input") {
  std::mt19937_64 rng(7);
  auto x = random_tensor({4, 1, 3, 5}, rng);
  double mean = 0.0, var = 0.0;
  for (double v : x.data()) mean += v;
  mean /= 60.0;
  for (double v : x.data()) var += (v - mean) * (v - mean);
  var /= 60.0;
  for (double& v : x.mutable_data()) v = (v - mean) / std::sqrt(var);
  Graph<double> g(false);
  BatchNormState<double> st{Tensor<double>({1}), Tensor<double>::full({1}, 1.0)};
  const auto y = batch_norm(g, x, Tensor<double>::full({1}, 1.0), Tensor<double>::full({1}, 5.0),
                            st, true);
  for (std::size_t i = 0; i < 60; ++i) CHECK(std::abs(y.data()[i] - (x.data()[i] + 5.0)) < 1e-6);
}

TEST_CASE("batch_norm: per-channel output statistics and running updates") {
  std::mt19937_64 rng(8);
  auto x = random_tensor({4, 3, 4, 5}, rng, 1.0, 4.0);
  Graph<double> g(false);
  BatchNormState<double> st{Tensor<double>({3}), Tensor<double>::full({3}, 1.0)};
  const auto y = batch_norm(g, x, Tensor<double>::full({3}, 1.0), Tensor<double>({3}), st, true);
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0.0, v = 0.0, xm = 0.0;
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t i = 0; i < 20; ++i) {
        m += y.data()[(b * 3 + c) * 20 + i];
        xm += x.data()[(b * 3 + c) * 20 + i];
      }
    m /= 80.0;
    xm /= 80.0;
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t i = 0; i < 20; ++i) v += std::pow(y.data()[(b * 3 + c) * 20 + i] - m, 2);
    v /= 80.0;
    CHECK(std::abs(m) < 1e-5);
    CHECK(std::abs(v - 1.0) < 1e-5);
    CHECK(st.running_mean.data()[c] == doctest::Approx(0.1 * xm).epsilon(1e-12));
  }

  // Eval mode uses the running statistics, not the batch.
  BatchNormState<double> fixed{Tensor<double>({3}, {1.0, 2.0, 3.0}),
                               Tensor<double>({3}, {4.0, 4.0, 4.0})};
  const auto ye = batch_norm(g, x, Tensor<double>::full({3}, 1.0), Tensor<double>({3}), fixed, false);
  for (std::size_t c = 0; c < 3; ++c)
    CHECK(ye.data()[c * 20] ==
          doctest::Approx((x.data()[c * 20] - (1.0 + c)) / std::sqrt(4.0 + kNormEps)));
  CHECK(fixed.running_mean.data()[0] == 1.0);
}

TEST_CASE("prelu examples and the relu degenerate case") {
  Graph<double> g(false);
  const Tensor<double> x({1, 1, 1, 2}, {2.0, -4.0});
  const auto y = prelu(g, x, Tensor<double>({1}, std::vector<double>{0.25}));
  CHECK(y.data()[0] == 2.0);
  CHECK(y.data()[1] == -1.0);

  std::mt19937_64 rng(9);
  const auto r = random_tensor({2, 3, 5, 7}, rng);
  const auto z = prelu(g, r, Tensor<double>({3}));
  for (std::size_t i = 0; i < r.numel(); ++i) CHECK(z.data()[i] == std::max(r.data()[i], 0.0));
}

TEST_CASE("elementwise and layout ops") {
  Graph<double> g(false);
  const Tensor<double> a({1, 2, 1, 2}, {1.0, -2.0, 3.0, 0.5});
  const Tensor<double> b({1, 2, 1, 2}, {2.0, 2.0, -1.0, 4.0});
  CHECK(add(g, a, b).data()[1] == 0.0);
  CHECK(mul(g, a, b).data()[2] == -3.0);
  CHECK(scale(g, a, 3.0).data()[3] == 1.5);
  CHECK(sum(g, a).item() == 2.5);
  CHECK(mse(g, a, b).item() == doctest::Approx((1.0 + 16.0 + 16.0 + 12.25) / 4.0));
  CHECK(tanh(g, a).data()[0] == doctest::Approx(std::tanh(1.0)));
  CHECK(sigmoid(g, a).data()[1] == doctest::Approx(1.0 / (1.0 + std::exp(2.0))));

  const Tensor<double> w({1, 1, 1, 2}, {10.0, -1.0});
  const auto mc = mul_channels(g, a, w);
  CHECK(mc.data()[0] == 10.0);
  CHECK(mc.data()[3] == -0.5);

  std::mt19937_64 rng(10);
  const auto x = random_tensor({2, 3, 4, 5}, rng);
  const auto s = swap_channel_height(g, x);
  CHECK(s.shape() == Shape{2, 4, 3, 5});
  CHECK(s.data()[((1 * 4 + 2) * 3 + 1) * 5 + 3] == x.data()[((1 * 3 + 1) * 4 + 2) * 5 + 3]);
  const auto back = swap_channel_height(g, s);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(back.data()[i] == x.data()[i]);
  CHECK_THROWS_AS(reshape(g, x, {7, 7}), std::invalid_argument);
  CHECK_THROWS_AS(add(g, a, x), std::invalid_argument);
}

TEST_CASE("magnitude, unit_normalize and power_law") {
  Graph<double> g(false);
  const Tensor<double> z({1, 2, 1, 3}, {3.0, 0.0, -1.0, 4.0, 0.0, 0.0});
  const auto m = magnitude(g, z);
  CHECK(m.data()[0] == 5.0);
  CHECK(m.data()[1] == 0.0);
  CHECK(m.data()[2] == 1.0);
  const auto u = unit_normalize(g, z);
  CHECK(u.data()[0] == doctest::Approx(0.6));
  CHECK(u.data()[3] == doctest::Approx(0.8));
  CHECK(u.data()[1] == 1.0);  // guarded dead bin
  CHECK(u.data()[4] == 0.0);
  CHECK(u.data()[2] == -1.0);

  const Tensor<double> amp({4}, {0.0, 1.0, 8.0, 0.5});
  const auto p = power_law(g, amp, 0.3);
  CHECK(p.data()[0] == 0.0);
  CHECK(p.data()[1] == 1.0);
  CHECK(p.data()[2] == doctest::Approx(1.86607).epsilon(1e-5));
  CHECK_THROWS_AS(power_law(g, Tensor<double>({1}, std::vector<double>{-1.0}), 0.3), std::invalid_argument);
}

TEST_CASE("fuzz: ops stay finite on finite inputs") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> mag(-12.0, 12.0);
  for (int trial = 0; trial < 60; ++trial) {
    const double s = std::pow(10.0, mag(rng));
    auto x = random_tensor({2, 2, 5, 4}, rng, -s, s);
    if (trial % 5 == 0)
      for (double& v : x.mutable_data()) v = s;  // constant map, zero variance
    Graph<double> g;
    const auto gamma = random_tensor({2}, rng);
    const auto beta = random_tensor({2}, rng);
    BatchNormState<double> st{Tensor<double>({2}), Tensor<double>::full({2}, 1.0)};
    CHECK_NOTHROW(global_layer_norm(g, x, gamma, beta));
    CHECK_NOTHROW(batch_norm(g, x, gamma, beta, st, true));
    CHECK_NOTHROW(prelu(g, x, gamma));
    CHECK_NOTHROW(tanh(g, x));
    CHECK_NOTHROW(sigmoid(g, x));
    CHECK_NOTHROW(unit_normalize(g, x));
    const auto m = magnitude(g, x);
    CHECK_NOTHROW(power_law(g, m, 0.3));
    for (double v : global_layer_norm(g, x, gamma, beta).data()) CHECK(std::isfinite(v));
    for (double v : sigmoid(g, x).data()) CHECK(std::isfinite(v));
  }
}
