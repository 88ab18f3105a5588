#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "lstmcf/error.hpp"
#include "lstmcf/metrics.hpp"
#include "lstmcf/random.hpp"
#include "support/oracles.hpp"

using namespace lstmcf;

namespace {

LabelMap random_map(Rng& rng, std::size_t k, double ignore_rate, std::size_t w = 8, std::size_t h = 8) {
  LabelMap m(w, h);
  for (auto& v : m.labels)
    v = rng.uniform() < ignore_rate ? kIgnoreLabel : static_cast<std::uint8_t>(rng.below(k));
  return m;
}

}  // namespace

TEST(Confusion, PerfectPredictionIsDiagonal) {
  Rng rng(1);
  const LabelMap t = random_map(rng, 4, 0.0);
  ConfusionMatrix cm(4);
  cm.accumulate(t, t);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      if (i != j) {
        EXPECT_EQ(cm.at(i, j), 0u);
      }
  EXPECT_EQ(cm.total(), 64u);
  const auto s = class_jaccard(cm);
  for (const auto& v : s.paper)
    if (v) {
      EXPECT_EQ(*v, 1.0);
    }
  EXPECT_EQ(s.mean_paper, 1.0);
}

TEST(Confusion, AllIgnored) {
  ConfusionMatrix cm(3);
  cm.accumulate(LabelMap(4, 4, 1), LabelMap(4, 4, kIgnoreLabel));
  EXPECT_EQ(cm.total(), 0u);
  EXPECT_EQ(cm.ignored(), 16u);
  const std::string r = format_report(cm, {"a", "b", "c"});
  EXPECT_NE(r.find("warning"), std::string::npos);
  EXPECT_EQ(class_jaccard(cm).defined, 0u);
}

TEST(Confusion, HandExample) {
  ConfusionMatrix cm(2);
  cm.add(0, 0, 3);
  cm.add(0, 1, 1);
  cm.add(1, 1, 4);
  const auto s = class_jaccard(cm);
  EXPECT_EQ(*s.paper[0], 0.75);
  EXPECT_EQ(*s.paper[1], 1.0);
  EXPECT_EQ(s.mean_paper, 0.875);
  EXPECT_EQ(*s.iou[0], 0.75);
  EXPECT_EQ(*s.iou[1], 0.8);
}

TEST(Confusion, MatchesBruteForce) {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 2 + rng.below(5);
    const LabelMap t = random_map(rng, k, 0.15), p = random_map(rng, k, 0.0);
    ConfusionMatrix cm(k);
    cm.accumulate(p, t);
    const auto o = oracle::brute_force_metrics(p.labels, t.labels, k);
    const auto s = class_jaccard(cm);
    EXPECT_EQ(cm.ignored(), o.ignored);
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < k; ++j) EXPECT_EQ(cm.at(i, j), o.n[i][j]);
      EXPECT_EQ(s.paper[i].has_value(), !std::isnan(o.paper[i]));
      if (s.paper[i]) {
        EXPECT_EQ(*s.paper[i], o.paper[i]);
        EXPECT_EQ(*s.iou[i], o.iou[i]);
        EXPECT_GE(*s.paper[i], *s.iou[i]);
        EXPECT_LE(*s.paper[i], 1.0);
      }
    }
    EXPECT_DOUBLE_EQ(s.mean_paper, o.mean_paper);
    EXPECT_EQ(s.pixel_accuracy, o.pixel_accuracy);
  }
}

TEST(Confusion, AbsentClassExcludedFromMean) {
  LabelMap t(4, 1), p(4, 1);
  t.labels = {0, 0, 2, 2};
  p.labels = {0, 2, 2, 2};
  ConfusionMatrix cm(3);
  cm.accumulate(p, t);
  const auto s = class_jaccard(cm);
  EXPECT_FALSE(s.paper[1].has_value());
  EXPECT_EQ(s.defined, 2u);
  EXPECT_EQ(s.mean_paper, (0.5 + 1.0) / 2);
}

TEST(Confusion, OrderIndependentAndMergeable) {
  Rng rng(3);
  const LabelMap t1 = random_map(rng, 4, 0.1), p1 = random_map(rng, 4, 0);
  const LabelMap t2 = random_map(rng, 4, 0.1), p2 = random_map(rng, 4, 0);
  ConfusionMatrix a(4), b(4), c1(4), c2(4);
  a.accumulate(p1, t1);
  a.accumulate(p2, t2);
  b.accumulate(p2, t2);
  b.accumulate(p1, t1);
  EXPECT_EQ(a, b);
  c1.accumulate(p1, t1);
  c2.accumulate(p2, t2);
  c1.merge(c2);
  EXPECT_EQ(a, c1);
}

TEST(Confusion, RejectsBadInput) {
  ConfusionMatrix cm(3);
  EXPECT_THROW(cm.accumulate(LabelMap(4, 4), LabelMap(4, 3)), ShapeError);
  EXPECT_THROW(cm.accumulate(LabelMap(2, 2, 3), LabelMap(2, 2, 0)), ShapeError);
  EXPECT_THROW(cm.merge(ConfusionMatrix(2)), ShapeError);
  EXPECT_THROW(format_report(cm, {"a"}), ShapeError);
}

TEST(Report, TableMatchesScores) {
  Rng rng(4);
  const LabelMap t = random_map(rng, 3, 0.1), p = random_map(rng, 3, 0);
  ConfusionMatrix cm(3);
  cm.accumulate(p, t);
  const auto s = class_jaccard(cm);
  std::istringstream in(format_report_tsv(cm, {"wall", "floor", "chair"}));
  std::string line;
  for (std::size_t i = 0; std::getline(in, line); ++i) {
    std::istringstream row(line);
    std::string idx, name, paper, iou, ti;
    std::getline(row, idx, '\t');
    std::getline(row, name, '\t');
    std::getline(row, paper, '\t');
    std::getline(row, iou, '\t');
    std::getline(row, ti, '\t');
    EXPECT_EQ(std::stoul(idx), i);
    EXPECT_EQ(std::stod(paper), *s.paper[i]);
    EXPECT_EQ(std::stod(iou), *s.iou[i]);
    EXPECT_EQ(std::stoull(ti), cm.truth_count(i));
  }
}

TEST(Report, IdentityNormalizedDiagonal) {
  ConfusionMatrix cm(2);
  cm.add(0, 0, 5);
  cm.add(1, 1, 7);
  const std::string r = format_report(cm, {"a", "b"});
  EXPECT_NE(r.find("a               1.0000  0.0000"), std::string::npos) << r;
  EXPECT_NE(r.find("b               0.0000  1.0000"), std::string::npos) << r;
  const auto dir = std::filesystem::temp_directory_path() / "lstmcf_report";
  write_report(dir, cm, {"a", "b"});
  std::ifstream tsv(dir / "report.tsv");
  std::string first;
  std::getline(tsv, first);
  EXPECT_EQ(first, "0\ta\t1\t1\t5");
}
