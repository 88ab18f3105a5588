#include <gtest/gtest.h>

#include <cmath>

#include "lstmcf/error.hpp"
#include "lstmcf/recurrent.hpp"
#include "support/oracles.hpp"

using namespace lstmcf;

namespace {

LstmCellParams scalar_cell(double b_i, double b_f, double b_o, double b_c) {
  LstmCellParams p = LstmCellParams::zeros(1, 1);
  p.b_i.data()[0] = b_i;
  p.b_f.data()[0] = b_f;
  p.b_o.data()[0] = b_o;
  p.b_c.data()[0] = b_c;
  return p;
}

BiScanLayer random_layer(ScanDirection dir, std::size_t c, std::size_t d, std::uint64_t seed, double scale = 0.5) {
  return BiScanLayer::create(dir, c, d, Uniform{-scale, scale}, seed);
}

}  // namespace

TEST(LstmStep, ZeroFixedPoint) {
  auto p = LstmCellParams::zeros(3, 2);
  auto s = lstm_step(p, Tensor(Shape{3}), Tensor(Shape{2}), Tensor(Shape{2}));
  for (double v : s.h.data()) EXPECT_EQ(v, 0.0);
  for (double v : s.c.data()) EXPECT_EQ(v, 0.0);
}

TEST(LstmStep, ScalarHandEvaluation) {
  auto s = lstm_step(scalar_cell(0, 0, 0, 20), Tensor(Shape{1}), Tensor(Shape{1}), Tensor(Shape{1}));
  EXPECT_NEAR(s.c.item(), 0.5 * std::tanh(20.0), 1e-15);
  EXPECT_NEAR(s.h.item(), std::tanh(0.5 * 0.5 * std::tanh(20.0)), 1e-15);
  EXPECT_NEAR(s.h.item(), 0.2449, 1e-4);
}

TEST(LstmStep, MemoryCarryWhenSaturated) {
  auto s = lstm_step(scalar_cell(-40, 40, 0, 3), Tensor(Shape{1}), Tensor(Shape{1}), Tensor(Shape{1}, {0.7}));
  EXPECT_NEAR(s.c.item(), 0.7, 1e-12);
}

TEST(LstmStep, MatchesScalarOracleBothModes) {
  Rng rng(42);
  for (int draw = 0; draw < 100; ++draw) {
    const std::size_t c = 1 + rng.below(5), d = 1 + rng.below(4);
    auto p = LstmCellParams::create(c, d, Uniform{-1.5, 1.5}, rng.next_u64());
    auto f = oracle::random_vec(c, rng, 2.0), h = oracle::random_vec(d, rng), cc = oracle::random_vec(d, rng, 2.0);
    for (bool conventional : {false, true}) {
      auto got = lstm_step(p, oracle::to_tensor(f), oracle::to_tensor(h), oracle::to_tensor(cc), conventional);
      auto want = oracle::lstm_step(p, f, h, cc, conventional);
      for (std::size_t k = 0; k < d; ++k) {
        EXPECT_NEAR(got.h.data()[k], want.h[k], 1e-12);
        EXPECT_NEAR(got.c.data()[k], want.c[k], 1e-12);
      }
    }
  }
}

TEST(LstmStep, RejectsMismatchedSizes) {
  auto p = LstmCellParams::zeros(3, 2);
  EXPECT_THROW(lstm_step(p, Tensor(Shape{2}), Tensor(Shape{2}), Tensor(Shape{2})), ShapeError);
  p.w_ih = Tensor(Shape{2, 3});
  EXPECT_THROW(p.validate(), ShapeError);
}

TEST(Scan, FusedKernelMatchesStepComposition) {
  for (auto dir : {ScanDirection::vertical, ScanDirection::horizontal})
    for (bool conventional : {false, true}) {
      auto layer = random_layer(dir, 3, 2, 7);
      layer.conventional_output_gate = conventional;
      Tensor x = create({3, 4, 5}, Uniform{-1, 1}, 8);
      Tensor fused = scan_bidirectional(layer, x), ref = scan_bidirectional_reference(layer, x);
      ASSERT_EQ(fused.shape(), ref.shape());
      for (std::size_t i = 0; i < fused.numel(); ++i) EXPECT_NEAR(fused.data()[i], ref.data()[i], 1e-13);
    }
}

TEST(Scan, SingleRowVerticalIsOneStepFromZero) {
  auto layer = random_layer(ScanDirection::vertical, 2, 3, 9);
  Tensor x = create({2, 1, 4}, Uniform{-1, 1}, 10);
  Tensor out = scan_bidirectional(layer, x);
  for (std::size_t col = 0; col < 4; ++col) {
    Tensor f(Shape{2}, {x.at(0, 0, col), x.at(1, 0, col)});
    auto fw = lstm_step(layer.forward, f, Tensor(Shape{3}), Tensor(Shape{3}));
    auto bw = lstm_step(layer.backward, f, Tensor(Shape{3}), Tensor(Shape{3}));
    for (std::size_t k = 0; k < 3; ++k) {
      EXPECT_NEAR(out.at(k, 0, col), fw.h.data()[k], 1e-15);
      EXPECT_NEAR(out.at(3 + k, 0, col), bw.h.data()[k], 1e-15);
    }
  }
}

TEST(Scan, OutputWidthIsTwiceHidden) {
  for (std::size_t c : {1u, 5u, 9u}) {
    auto layer = random_layer(ScanDirection::vertical, c, 3, c);
    EXPECT_EQ(scan_bidirectional(layer, Tensor(Shape{c, 2, 2})).shape(), (Shape{6, 2, 2}));
  }
  auto layer = random_layer(ScanDirection::vertical, 4, 3, 1);
  EXPECT_THROW(scan_bidirectional(layer, Tensor(Shape{5, 2, 2})), ShapeError);
}

TEST(Scan, DependencyConesBothDirections) {
  Rng rng(77);
  for (auto dir : {ScanDirection::vertical, ScanDirection::horizontal}) {
    oracle::ConeReport report;
    for (int trial = 0; trial < 20; ++trial) {
      auto layer = random_layer(dir, 2, 2, rng.next_u64());
      Tensor x = create({2, 5, 6}, Uniform{-1, 1}, rng.next_u64());
      oracle::cone_trial(layer, x, rng.below(5), rng.below(6), 0.3, report);
    }
    EXPECT_EQ(report.violations, 0u) << report.first_violation;
    EXPECT_EQ(report.silent, 0u);
  }
}

TEST(Scan, GradientMatchesFiniteDifferences) {
  for (auto dir : {ScanDirection::vertical, ScanDirection::horizontal})
    for (bool conventional : {false, true}) {
      auto layer = random_layer(dir, 3, 2, 11, 0.8);
      layer.conventional_output_gate = conventional;
      Tensor x = create({3, 4, 4}, Uniform{-1, 1}, 12);
      Tensor readout = create({4, 4, 4}, Uniform{-1, 1}, 13);
      std::vector<Tensor> params{x};
      for (const auto& [name, t] : layer.named("")) params.push_back(t);
      auto r = grad_check([&]() { return sum(mul(scan_bidirectional(layer, x), readout)); }, params);
      EXPECT_LT(r.max_rel_error, 1e-5);
    }
}

TEST(Scan, FusedGradientsMatchReferenceRoute) {
  auto layer = random_layer(ScanDirection::horizontal, 2, 3, 14, 0.8);
  Tensor x = create({2, 3, 4}, Uniform{-1, 1}, 15);
  Tensor readout = create({6, 3, 4}, Uniform{-1, 1}, 16);
  auto params = layer.named("");
  params.push_back({"x", x});
  auto collect = [&](bool fused) {
    for (auto& [n, t] : params) {
      t.set_requires_grad(true);
      t.zero_grad();
    }
    value_and_grad([&]() {
      return sum(mul(fused ? scan_bidirectional(layer, x) : scan_bidirectional_reference(layer, x), readout));
    });
    std::vector<double> all;
    for (auto& [n, t] : params) all.insert(all.end(), t.grad().begin(), t.grad().end());
    return all;
  };
  auto a = collect(true), b = collect(false);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(Fusion, ShapesAndZeroParams) {
  auto fusion = BiScanLayer::create(ScanDirection::horizontal, 8, 2, Zeros{}, 0);
  Tensor a = create({4, 3, 3}, Uniform{-1, 1}, 1), b = create({4, 3, 3}, Uniform{-1, 1}, 2);
  Tensor out = fuse_contexts(fusion, a, b);
  EXPECT_EQ(out.shape(), (Shape{4, 3, 3}));
  for (double v : out.data()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(fuse_contexts(fusion, a, Tensor(Shape{4, 3, 2})), ShapeError);
}

TEST(Fusion, DepthPerturbationStaysInRow) {
  Rng rng(5);
  auto fusion = random_layer(ScanDirection::horizontal, 8, 2, 3);
  Tensor rgb = create({4, 4, 5}, Uniform{-1, 1}, 4), depth = create({4, 4, 5}, Uniform{-1, 1}, 6);
  const Tensor base = fuse_contexts(fusion, rgb, depth);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t py = rng.below(4), px = rng.below(5);
    Tensor moved = depth.clone();
    moved.at(1, py, px) += 0.5;
    const Tensor out = fuse_contexts(fusion, rgb, moved);
    for (std::size_t ch = 0; ch < 4; ++ch)
      for (std::size_t y = 0; y < 4; ++y)
        for (std::size_t x = 0; x < 5; ++x) {
          const bool changed = out.at(ch, y, x) != base.at(ch, y, x);
          EXPECT_EQ(changed, oracle::in_cone(false, ch < 2, py, px, y, x));
        }
  }
}
