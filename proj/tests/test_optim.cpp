#include <doctest.h>

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "phasen/model/checkpoint.hpp"
#include "phasen/ndgrad/random.hpp"
#include "phasen/optim/adam.hpp"
#include "phasen/optim/data.hpp"
#include "phasen/optim/train.hpp"

using namespace phasen;
using namespace phasen::optim;
using ndgrad::Tensor;

namespace {

model::ArchConfig tiny_arch() {
  model::ArchConfig c;
  c.amp_channels = 4;
  c.phase_channels = 4;
  c.spa_mid_channels = 2;
  c.postnet_conv_filters = 8;
  c.postnet_narrow_channels = 2;
  c.num_tsb = 1;
  return c;
}

ClipPair sine_pair(std::size_t n, double freq, std::uint64_t seed) {
  Rng rng(seed);
  ClipPair p;
  p.name = "pair" + std::to_string(seed);
  p.clean = {std::vector<double>(n), dsp::kSampleRate};
  p.noisy = {std::vector<double>(n), dsp::kSampleRate};
  for (std::size_t i = 0; i < n; ++i) {
    const double s = 0.5 * std::sin(2.0 * std::numbers::pi * freq * double(i) / 16000.0);
    p.clean.samples[i] = s;
    p.noisy.samples[i] = s + rng.uniform(-0.2, 0.2);
  }
  return p;
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("phasen_test_optim_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

TEST_CASE("warmup schedule examples") {
  const TrainConfig c;
  CHECK(lr_schedule(0, c) == 0.0);
  CHECK(lr_schedule(6000, c) == doctest::Approx(0.0002).epsilon(1e-15));
  CHECK(lr_schedule(3000, c) == doctest::Approx(0.0001).epsilon(1e-15));
  CHECK(lr_schedule(100000, c) == 0.0002);
}

TEST_CASE("schedule is non-decreasing and bounded") {
  TrainConfig c;
  c.warmup_steps = 37;
  double prev = -1.0;
  for (std::size_t s = 0; s < 200; ++s) {
    const double lr = lr_schedule(s, c);
    CHECK(lr >= prev);
    CHECK(lr <= c.peak_lr);
    prev = lr;
  }
}

TEST_CASE("train config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.warmup_steps = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.peak_lr = -1.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("adam: zero gradients leave params and decay moments") {
  Tensor<double> x({3}, {1.0, -2.0, 0.5}, true);
  NamedTensors<double> params{{"x", x}};
  AdamState<double> st(params);
  x.mutable_grad()[0] = 1.0;
  adam_step(st, params, 0.1);
  const double m_before = st.m[0].second.data()[0];
  const double v_before = st.v[0].second.data()[0];
  const std::vector<double> before(x.data().begin(), x.data().end());
  x.zero_grad();
  adam_step(st, params, 0.1);
  CHECK(st.m[0].second.data()[0] == doctest::Approx(0.9 * m_before));
  CHECK(st.v[0].second.data()[0] == doctest::Approx(0.999 * v_before));
  CHECK(x.data()[1] == before[1]);
  CHECK(x.data()[2] == before[2]);
  CHECK(st.step == 2);

  Tensor<double> y({2}, {3.0, 4.0}, true);
  NamedTensors<double> py{{"y", y}};
  AdamState<double> sy(py);
  adam_step(sy, py, 0.1);
  CHECK(y.data()[0] == 3.0);
  CHECK(y.data()[1] == 4.0);
}

TEST_CASE("adam: first step moves by about lr against the gradient sign") {
  for (double g : {3.0, -0.02, 1e-3}) {
    Tensor<double> x({1}, {0.0}, true);
    NamedTensors<double> params{{"x", x}};
    AdamState<double> st(params);
    x.mutable_grad()[0] = g;
    adam_step(st, params, 0.01);
    const double want = -0.01 * g / (std::abs(g) + 1e-8);
    CHECK(x.data()[0] == doctest::Approx(want).epsilon(1e-6));
  }
}

TEST_CASE("adam: quadratic bowl descends monotonically") {
  Tensor<double> x({1}, {1.0}, true);
  NamedTensors<double> params{{"x", x}};
  AdamState<double> st(params);
  double prev = 0.5;
  for (int i = 0; i < 50; ++i) {
    x.zero_grad();
    x.mutable_grad()[0] = x.data()[0];
    adam_step(st, params, 0.01);
    const double loss = 0.5 * x.data()[0] * x.data()[0];
    CHECK(loss < prev);
    prev = loss;
  }
  CHECK(x.data()[0] < 0.6);
}

TEST_CASE("adam: non-finite gradient aborts naming the parameter") {
  Tensor<double> a({1}, {1.0}, true), b({2}, {1.0, 2.0}, true);
  NamedTensors<double> params{{"layer.a", a}, {"layer.b", b}};
  AdamState<double> st(params);
  a.mutable_grad()[0] = 0.5;
  b.mutable_grad()[1] = NAN;
  try {
    adam_step(st, params, 0.1);
    FAIL("expected throw");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("layer.b") != std::string::npos);
  }
  CHECK(a.data()[0] == 1.0);
  CHECK(st.step == 0);
}

TEST_CASE("adam: names and shapes are untouched") {
  Tensor<double> a({2, 3}, true);
  NamedTensors<double> params{{"a", a}};
  AdamState<double> st(params);
  a.mutable_grad()[4] = 1.0;
  adam_step(st, params, 0.1);
  CHECK(params[0].first == "a");
  CHECK(params[0].second.shape() == ndgrad::Shape{2, 3});
  CHECK(st.m[0].first == "a");
}

TEST_CASE("clip_segment: length, padding and shared offset") {
  const auto pair = sine_pair(16000 * 5, 440.0, 1);
  Rng r1(5), r2(5);
  const auto [n1, c1] = clip_segment(pair.noisy, pair.clean, 3.0, r1);
  const auto [n2, c2] = clip_segment(pair.noisy, pair.clean, 3.0, r2);
  CHECK(n1.size() == 48000);
  CHECK(c1.size() == 48000);
  CHECK(n1.samples == n2.samples);
  // Same offset for both clips: the noise residual lines up.
  std::size_t offset = 0;
  while (pair.clean.samples[offset] != c1.samples[0] || pair.noisy.samples[offset] != n1.samples[0])
    ++offset;
  for (std::size_t i = 0; i < 48000; i += 997) {
    CHECK(c1.samples[i] == pair.clean.samples[offset + i]);
    CHECK(n1.samples[i] == pair.noisy.samples[offset + i]);
  }

  const auto short_pair = sine_pair(16000, 440.0, 2);
  Rng r3(1);
  const std::string before = r3.state();
  const auto [ns, cs] = clip_segment(short_pair.noisy, short_pair.clean, 3.0, r3);
  CHECK(ns.size() == 48000);
  CHECK(cs.samples[15999] == short_pair.clean.samples[15999]);
  for (std::size_t i = 16000; i < 48000; ++i) CHECK(cs.samples[i] == 0.0);
  CHECK(r3.state() == before);

  auto bad = short_pair.clean;
  bad.samples.pop_back();
  CHECK_THROWS_AS(clip_segment(short_pair.noisy, bad, 3.0, r3), std::invalid_argument);
}

TEST_CASE("manifest parsing and dataset loading") {
  const auto dir = scratch_dir("manifest");
  {
    std::ofstream m(dir / "list.tsv");
    m << "# comment\n\na.wav\tb.wav\nmissing.wav\tb.wav\n";
  }
  const auto entries = read_manifest(dir / "list.tsv");
  REQUIRE(entries.size() == 2);
  CHECK(entries[0].noisy == dir / "a.wav");
  CHECK(entries[0].clean == dir / "b.wav");

  const auto reader = [](const std::filesystem::path& p) {
    if (p.filename() == "missing.wav") throw std::runtime_error("cannot open");
    return dsp::AudioClip{std::vector<double>(400, 0.1), dsp::kSampleRate};
  };
  const auto ds = load_dataset(entries, reader);
  CHECK(ds.pairs.size() == 1);
  CHECK(ds.warnings.size() == 1);
  CHECK(ds.warnings[0].find("missing.wav") != std::string::npos);

  const auto failing = [](const std::filesystem::path&) -> dsp::AudioClip {
    throw std::runtime_error("nope");
  };
  CHECK_THROWS_AS(load_dataset(entries, failing), std::runtime_error);

  {
    std::ofstream m(dir / "bad.tsv");
    m << "only_one_column.wav\n";
  }
  CHECK_THROWS(read_manifest(dir / "bad.tsv"));
}

TEST_CASE("training reduces the loss on a two-pair sine corpus") {
  Dataset data;
  data.pairs = {sine_pair(3200, 500.0, 1), sine_pair(3200, 1250.0, 2)};
  TrainConfig c;
  c.peak_lr = 2e-3;
  c.warmup_steps = 20;
  c.batch_size = 2;
  c.clip_seconds = 0.1;
  c.max_steps = 200;
  c.seed = 3;
  const auto r = train<float>(data, c, tiny_arch());
  REQUIRE(r.log.size() == 200);
  double first = 0.0;
  for (std::size_t i = 0; i < 10; ++i) first += r.log[i].total_loss;
  first /= 10.0;
  CHECK(r.log.back().total_loss < first);
  for (std::size_t i = 0; i < r.log.size(); ++i) CHECK(r.log[i].step == i + 1);
}

TEST_CASE("small datasets draw the batch with replacement") {
  Dataset data;
  data.pairs = {sine_pair(1600, 700.0, 4)};
  TrainConfig c;
  c.batch_size = 4;
  c.clip_seconds = 0.05;
  c.max_steps = 2;
  const auto r = train<float>(data, c, tiny_arch());
  CHECK(r.log.size() == 2);
  CHECK(std::isfinite(r.log.back().total_loss));
}

TEST_CASE("same seed gives a bit-identical loss log in 64-bit mode") {
  Dataset data;
  data.pairs = {sine_pair(2400, 600.0, 5), sine_pair(2400, 900.0, 6), sine_pair(2400, 300.0, 7)};
  TrainConfig c;
  c.warmup_steps = 3;
  c.peak_lr = 1e-3;
  c.batch_size = 2;
  c.clip_seconds = 0.05;
  c.max_steps = 6;
  c.seed = 11;
  const auto dir = scratch_dir("determinism");
  TrainOptions o1, o2;
  o1.loss_csv = dir / "a.csv";
  o2.loss_csv = dir / "b.csv";
  train<double>(data, c, tiny_arch(), o1);
  train<double>(data, c, tiny_arch(), o2);
  const std::string a = slurp(o1.loss_csv);
  CHECK(a == slurp(o2.loss_csv));
  CHECK(a.rfind(std::string(kLossCsvHeader) + "\n", 0) == 0);

  c.seed = 12;
  TrainOptions o3;
  o3.loss_csv = dir / "c.csv";
  train<double>(data, c, tiny_arch(), o3);
  CHECK(a != slurp(o3.loss_csv));
}

TEST_CASE("checkpoints resume training exactly, also mid-epoch") {
  Dataset data;
  for (std::uint64_t k = 0; k < 4; ++k) data.pairs.push_back(sine_pair(2400, 400.0 + 250.0 * k, 8 + k));
  TrainConfig c;
  c.warmup_steps = 2;
  c.peak_lr = 1e-3;
  c.batch_size = 2;
  c.clip_seconds = 0.05;
  c.max_steps = 5;
  c.seed = 13;
  const auto dir = scratch_dir("resume");
  TrainOptions o;
  o.checkpoint_dir = dir;
  o.checkpoint_every = 3;
  const auto full = train<double>(data, c, tiny_arch(), o);
  REQUIRE(std::filesystem::exists(dir / "step_3.ckpt"));
  REQUIRE(std::filesystem::exists(dir / "final.ckpt"));

  // Two steps per epoch: step 3 is the middle of the second epoch.
  auto resumed_state = state_from_checkpoint<double>(model::read_checkpoint(dir / "step_3.ckpt"));
  CHECK(resumed_state.step == 3);
  const auto rest = train<double>(data, c, std::move(resumed_state));
  REQUIRE(rest.log.size() == 2);
  CHECK(rest.log[0].step == 4);
  CHECK(rest.log[0].total_loss == full.log[3].total_loss);
  CHECK(rest.log[1].total_loss == full.log[4].total_loss);

  // save -> load -> save is byte identical
  const auto ckpt = model::read_checkpoint(dir / "final.ckpt");
  const auto again = state_to_checkpoint(state_from_checkpoint<double>(ckpt));
  CHECK(model::encode_checkpoint(again) == model::encode_checkpoint(ckpt));
}

TEST_CASE("step log formatting") {
  StepLog row{7, 0.5, 0.25, 0.125, 0.1875};
  CHECK(format_step(row) == "7,0.5,0.25,0.125,0.1875");
}

TEST_CASE("rng state round trips and draws are reproducible") {
  Rng a(99);
  a.next();
  const auto s = a.state();
  Rng b;
  b.restore(s);
  for (int i = 0; i < 10; ++i) CHECK(a.next() == b.next());
  Rng c(1);
  for (int i = 0; i < 1000; ++i) {
    const double u = c.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(c.index(7) < 7);
  }
}
