#include <cmath>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <torch/torch.h>

#include <json.hpp>

#include "sscd/error.hpp"
#include "sscd/metrics.hpp"
#include "support.hpp"

namespace sscd {
namespace {

// Reference tally written independently of accumulate().
ConfusionCounts tally(const torch::Tensor& pred, const torch::Tensor& gt) {
  ConfusionCounts c;
  auto p = pred.accessor<std::uint8_t, 2>();
  auto g = gt.accessor<std::uint8_t, 2>();
  for (int64_t y = 0; y < pred.size(0); ++y) {
    for (int64_t x = 0; x < pred.size(1); ++x) {
      if (p[y][x] && g[y][x]) ++c.tp;
      else if (p[y][x]) ++c.fp;
      else if (g[y][x]) ++c.fn;
      else ++c.tn;
    }
  }
  return c;
}

ChangeProbabilityMap probs_from_change(const torch::Tensor& change) {
  auto c = change.to(torch::kFloat64).unsqueeze(0);
  ChangeProbabilityMap m;
  m.probs = torch::stack({1.0 - c, c}, 1);
  m.logits = m.probs.log();
  return m;
}

TEST(Binarize, AllHighProbabilityGivesOnes) {
  auto m = probs_from_change(torch::full({4, 4}, 0.9));
  EXPECT_TRUE(binarize(m, 0.5).eq(1).all().item<bool>());
}

TEST(Binarize, TieAtThresholdCountsAsChange) {
  auto m = probs_from_change(torch::full({3, 3}, 0.5));
  EXPECT_TRUE(binarize(m, 0.5).eq(1).all().item<bool>());
}

TEST(Binarize, MatchesElementwiseComparison) {
  Rng rng(5);
  auto p = rng.uniform_tensor({8, 8}, 0.0, 1.0, torch::kFloat64);
  auto mask = binarize(probs_from_change(p), 0.3)[0];
  for (int64_t y = 0; y < 8; ++y) {
    for (int64_t x = 0; x < 8; ++x) {
      const bool expected = p[y][x].item<double>() >= 0.3;
      EXPECT_EQ(mask[y][x].item<int>(), expected ? 1 : 0);
    }
  }
}

TEST(Accumulate, AllOnesCountAsTruePositives) {
  auto ones = torch::ones({5, 7}, torch::kUInt8);
  auto c = accumulate(ones, ones);
  EXPECT_EQ(c.tp, 35u);
  EXPECT_EQ(c.fp + c.fn + c.tn, 0u);
}

TEST(Accumulate, InvertedPredictionOnlyGrowsErrors) {
  Rng rng(2);
  auto gt = testing::random_mask(rng, 16, 16);
  auto c = accumulate(1 - gt, gt);
  EXPECT_EQ(c.tp, 0u);
  EXPECT_EQ(c.tn, 0u);
  EXPECT_EQ(c.fp + c.fn, 256u);
}

TEST(Accumulate, MatchesNestedLoopTally) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    auto pred = testing::random_mask(rng, 32, 32, rng.uniform01());
    auto gt = testing::random_mask(rng, 32, 32, rng.uniform01());
    EXPECT_EQ(accumulate(pred, gt), tally(pred, gt)) << "seed " << seed;
  }
}

TEST(Accumulate, ShapeMismatchRejected) {
  auto a = torch::zeros({4, 4}, torch::kUInt8);
  auto b = torch::zeros({4, 5}, torch::kUInt8);
  EXPECT_THROW(accumulate(a, b), ValidationError);
}

TEST(Accumulate, NonBinaryRejected) {
  auto a = torch::full({2, 2}, 2, torch::kUInt8);
  auto b = torch::zeros({2, 2}, torch::kUInt8);
  EXPECT_THROW(accumulate(a, b), ValidationError);
  EXPECT_THROW(accumulate(a.to(torch::kFloat32), b), ValidationError);
  EXPECT_THROW(accumulate((a - 3).to(torch::kInt64), b), ValidationError);
}

TEST(Accumulate, OrderIndependentAndMergeable) {
  Rng rng(9);
  std::vector<std::pair<torch::Tensor, torch::Tensor>> batches;
  for (int i = 0; i < 5; ++i) {
    batches.emplace_back(testing::random_mask(rng, 8, 8), testing::random_mask(rng, 8, 8));
  }
  ConfusionCounts forward, backward, merged;
  for (auto& [p, g] : batches) forward = accumulate(p, g, forward);
  for (auto it = batches.rbegin(); it != batches.rend(); ++it) {
    backward = accumulate(it->first, it->second, backward);
  }
  ConfusionCounts left, right;
  for (int i = 0; i < 2; ++i) left = accumulate(batches[i].first, batches[i].second, left);
  for (int i = 2; i < 5; ++i) right = accumulate(batches[i].first, batches[i].second, right);
  merged = left + right;
  EXPECT_EQ(forward, backward);
  EXPECT_EQ(forward, merged);
}

TEST(Accumulate, SwappingPredAndGtSwapsErrors) {
  Rng rng(4);
  auto p = testing::random_mask(rng, 12, 12), g = testing::random_mask(rng, 12, 12);
  auto a = accumulate(p, g), b = accumulate(g, p);
  EXPECT_EQ(a.tp, b.tp);
  EXPECT_EQ(a.tn, b.tn);
  EXPECT_EQ(a.fp, b.fn);
  EXPECT_EQ(a.fn, b.fp);
}

TEST(IouChange, Arithmetic) {
  ConfusionCounts c;
  c.tp = 50;
  c.fp = 25;
  c.fn = 25;
  EXPECT_DOUBLE_EQ(iou_change(c), 0.5);
}

TEST(IouChange, PerfectPredictionIsOne) {
  ConfusionCounts c;
  c.tp = 10;
  c.tn = 3;
  EXPECT_DOUBLE_EQ(iou_change(c), 1.0);
}

TEST(IouChange, NoPositivesAnywhereIsOne) {
  ConfusionCounts c;
  c.tn = 100;
  EXPECT_DOUBLE_EQ(iou_change(c), 1.0);
}

TEST(OverallAccuracy, Arithmetic) {
  ConfusionCounts c;
  c.tp = 10;
  c.tn = 80;
  c.fp = 5;
  c.fn = 5;
  EXPECT_DOUBLE_EQ(overall_accuracy(c), 0.9);
  ConfusionCounts wrong;
  wrong.fp = 3;
  wrong.fn = 4;
  EXPECT_DOUBLE_EQ(overall_accuracy(wrong), 0.0);
  ConfusionCounts right;
  right.tp = 3;
  right.tn = 4;
  EXPECT_DOUBLE_EQ(overall_accuracy(right), 1.0);
}

TEST(OverallAccuracy, EmptyCountsRejected) {
  EXPECT_THROW(overall_accuracy(ConfusionCounts{}), ValidationError);
}

TEST(MetricsReport, JsonCarriesAllFields) {
  ConfusionCounts c;
  c.tp = 1;
  c.fp = 2;
  c.fn = 3;
  c.tn = 4;
  auto r = MetricsReport::from_counts(c, 0.5);
  testing::TempDir dir("metrics");
  r.write(dir / "m.json");
  std::ifstream in(dir / "m.json");
  auto j = nlohmann::json::parse(in);
  EXPECT_DOUBLE_EQ(j["iou_change"].get<double>(), 1.0 / 6.0);
  EXPECT_DOUBLE_EQ(j["overall_accuracy"].get<double>(), 0.5);
  EXPECT_EQ(j["tp"].get<int>(), 1);
  EXPECT_EQ(j["fp"].get<int>(), 2);
  EXPECT_EQ(j["fn"].get<int>(), 3);
  EXPECT_EQ(j["tn"].get<int>(), 4);
  EXPECT_DOUBLE_EQ(j["threshold"].get<double>(), 0.5);
}

}  // namespace
}  // namespace sscd
