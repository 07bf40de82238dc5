#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <tuple>

#include "stairnet/errors.hpp"
#include "stairnet/grad_check.hpp"
#include "stairnet/multibox_loss.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace stairnet {
namespace {

using testing::random_tensor;

BoxXYXY random_box(std::mt19937_64& rng, double lo = 0.05, double hi = 0.5) { return oracle::random_box(rng, lo, hi); }

DefaultBoxSet box_set(const std::vector<BoxXYXY>& corners) {
  DefaultBoxSet s;
  for (const auto& c : corners) {
    s.corners.push_back(c);
    s.boxes.push_back(to_center(c));
    s.provenance.push_back({});
  }
  s.level_offsets = {0, static_cast<int>(corners.size())};
  s.boxes_per_cell = 1;
  return s;
}

TEST(Matching, SingleAnchorAboveThreshold) {
  const std::vector<BoxXYXY> anchors{{0, 0, 1, 0.6}};
  const auto m = match_anchors(anchors, {{{0, 0, 1, 1}, 2}}, 0.5);
  EXPECT_EQ(m.num_positive, 1);
  EXPECT_EQ(m.labels[0], 2);
  EXPECT_EQ(m.gt_index[0], 0);
}

TEST(Matching, BestMatchBelowThresholdStillClaimed) {
  const std::vector<BoxXYXY> anchors{{0, 0, 0.3, 1}, {0.8, 0.8, 1, 1}};
  const std::vector<GtBox> gts{{{0, 0, 1, 1}, 1}};
  EXPECT_NEAR(iou(anchors[0], gts[0].box), 0.3, 1e-12);
  const auto m = match_anchors(anchors, gts, 0.5);
  EXPECT_EQ(m.num_positive, 1);
  EXPECT_EQ(m.gt_index[0], 0);
  EXPECT_EQ(m.gt_index[1], -1);
}

TEST(Matching, EmptyGtIsAllBackground) {
  const std::vector<BoxXYXY> anchors{{0, 0, 1, 1}, {0, 0, 0.5, 0.5}};
  const auto m = match_anchors(anchors, {}, 0.5);
  EXPECT_EQ(m.num_positive, 0);
  EXPECT_EQ(m.labels, (std::vector<int>{0, 0}));
}

TEST(Matching, TiesGoToLowestAnchorIndex) {
  const std::vector<BoxXYXY> anchors{{0, 0, 0.5, 0.5}, {0, 0, 0.5, 0.5}};
  const auto m = match_anchors(anchors, {{{0, 0, 0.4, 0.4}, 1}}, 0.9);
  EXPECT_EQ(m.gt_index, (std::vector<int>{0, -1}));
}

TEST(Matching, EqualsOracleOnRandomInstances) {
  const auto t = oracle::compare_matching(1000, 123);
  EXPECT_EQ(t.mismatches, 0) << "first mismatch at instance " << t.first_mismatch;
}

TEST(Matching, EveryGtClaimsAnAnchor) {
  std::mt19937_64 rng(124);
  for (int t = 0; t < 300; ++t) {
    std::vector<BoxXYXY> anchors;
    for (int i = 0; i < 50; ++i) anchors.push_back(random_box(rng));
    std::vector<GtBox> gts;
    for (int g = 0; g < 5; ++g) gts.push_back({random_box(rng), 1 + g % 3});
    const auto m = match_anchors(anchors, gts, 0.5);
    for (int g = 0; g < 5; ++g) ASSERT_NE(std::count(m.gt_index.begin(), m.gt_index.end(), g), 0) << t;
  }
}

TEST(Matching, PermutationEquivariantInGtOrder) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 100; ++t) {
    std::vector<BoxXYXY> anchors;
    for (int i = 0; i < 40; ++i) anchors.push_back(random_box(rng));
    std::vector<GtBox> gts;
    for (int g = 0; g < 4; ++g) gts.push_back({random_box(rng), g + 1});
    std::vector<int> perm{3, 1, 0, 2};
    std::vector<GtBox> shuffled;
    for (int p : perm) shuffled.push_back(gts[p]);
    const auto a = match_anchors(anchors, gts, 0.5);
    const auto b = match_anchors(anchors, shuffled, 0.5);
    for (std::size_t i = 0; i < anchors.size(); ++i) {
      EXPECT_EQ(a.labels[i], b.labels[i]);
      if (b.gt_index[i] >= 0) {
        EXPECT_EQ(a.gt_index[i], perm[b.gt_index[i]]);
      }
    }
  }
}

TEST(Mining, RatioArithmetic) {
  MatchResult m;
  m.labels.assign(102, 0);
  m.labels[0] = m.labels[1] = 1;
  m.num_positive = 2;
  const auto z = random_tensor<double>({1, 1, 102, 3}, 1);
  EXPECT_EQ(hard_negative_mining(z.span(), 3, m, 3.0).size(), 6u);
  m.num_positive = 50;
  EXPECT_EQ(hard_negative_mining(z.span(), 3, m, 3.0).size(), 100u);
  m.labels.assign(102, 0);
  m.num_positive = 0;
  EXPECT_TRUE(hard_negative_mining(z.span(), 3, m, 3.0).empty());
}

TEST(Mining, EqualsFullSortOracle) {
  const auto t = oracle::compare_mining(1000, 9);
  EXPECT_EQ(t.mismatches, 0) << "first mismatch at instance " << t.first_mismatch;
}

struct LossCase {
  DefaultBoxSet anchors;
  std::vector<std::vector<GtBox>> targets;
};

TEST(MultiboxLoss, HandExample) {
  LossCase c{box_set({{0.125, 0.125, 0.375, 0.375}, {0.6, 0.6, 0.9, 0.9}, {0.6, 0.0, 0.9, 0.3}}),
             {{{{0.125, 0.125, 0.375, 0.375}, 1}}}};
  Tape<double> tape;
  Var loc = tape.input(Tensor<double>({1, 1, 3, 4}, {0.5, -2, 0.1, 0, 0, 0, 0, 0, 0, 0, 0, 0}));
  Var conf = tape.input(Tensor<double>({1, 1, 3, 2}, {0, 1, 1, 0, 0, 0}));
  auto r = multibox_loss(tape, loc, conf, c.anchors, c.targets, Variances{}, LossConfig{});
  EXPECT_EQ(r.breakdown.num_positive, 1);
  EXPECT_NEAR(r.breakdown.loc_term, 0.125 + 1.5 + 0.005, 1e-12);
  EXPECT_NEAR(r.breakdown.total, 2.949670555596391, 1e-6);
  EXPECT_EQ(tape.value(r.total)[0], r.breakdown.total);
  EXPECT_EQ(r.negatives[0], (std::vector<int>{1, 2}));
}

TEST(MultiboxLoss, PerfectPredictionIsNearZero) {
  const DefaultBoxSet anchors = box_set({{0.1, 0.1, 0.4, 0.4}, {0.5, 0.5, 0.9, 0.9}, {0.0, 0.6, 0.3, 1.0}});
  const std::vector<GtBox> gts{{{0.12, 0.1, 0.42, 0.38}, 2}};
  const auto m = match_anchors(anchors, gts, 0.5);
  Tensor<double> loc({1, 1, 3, 4}), conf({1, 1, 3, 3});
  for (int a = 0; a < 3; ++a) {
    const int label = m.labels[a];
    if (label) {
      const Offsets t = encode_box(gts[0].box, anchors.boxes[a], Variances{});
      for (int j = 0; j < 4; ++j) loc.at(0, 0, a, j) = t[j];
    }
    conf.at(0, 0, a, label) = 30.0;
  }
  Tape<double> tape;
  auto r = multibox_loss(tape, tape.input(loc), tape.input(conf), anchors, {gts}, Variances{}, LossConfig{});
  EXPECT_EQ(r.breakdown.loc_term, 0.0);
  EXPECT_LT(r.breakdown.conf_term, 1e-10);
}

TEST(MultiboxLoss, NoPositivesGivesZeroLossAndGradient) {
  const DefaultBoxSet anchors = box_set({{0, 0, 0.5, 0.5}, {0.5, 0.5, 1, 1}});
  Tape<double> tape;
  Var loc = tape.input(random_tensor<double>({2, 1, 2, 4}, 1));
  Var conf = tape.input(random_tensor<double>({2, 1, 2, 3}, 2));
  auto r = multibox_loss(tape, loc, conf, anchors, {{}, {}}, Variances{}, LossConfig{});
  EXPECT_EQ(r.breakdown.total, 0.0);
  EXPECT_EQ(r.breakdown.num_positive, 0);
  tape.backward(r.total);
  const auto gl = tape.grad(loc), gc = tape.grad(conf);
  for (double g : gl.vec()) EXPECT_EQ(g, 0.0);
  for (double g : gc.vec()) EXPECT_EQ(g, 0.0);
}

LossCase random_case(std::mt19937_64& rng, int na, int images) {
  std::vector<BoxXYXY> corners;
  for (int i = 0; i < na; ++i) corners.push_back(random_box(rng, 0.1, 0.5));
  LossCase c{box_set(corners), {}};
  for (int b = 0; b < images; ++b) {
    std::vector<GtBox> gts;
    for (int g = 0; g < 1 + b % 3; ++g) gts.push_back({random_box(rng, 0.1, 0.5), 1 + g % 2});
    c.targets.push_back(gts);
  }
  return c;
}

TEST(MultiboxLoss, UnselectedNegativesGetZeroGradient) {
  std::mt19937_64 rng(3);
  const LossCase c = random_case(rng, 60, 2);
  Tape<double> tape;
  Var loc = tape.input(random_tensor<double>({2, 1, 60, 4}, 5));
  Var conf = tape.input(random_tensor<double>({2, 1, 60, 3}, 6));
  auto r = multibox_loss(tape, loc, conf, c.anchors, c.targets, Variances{}, LossConfig{});
  tape.backward(r.total);
  const auto gc = tape.grad(conf);
  const auto gl = tape.grad(loc);
  for (int b = 0; b < 2; ++b)
    for (int a = 0; a < 60; ++a) {
      const bool neg_selected = std::binary_search(r.negatives[b].begin(), r.negatives[b].end(), a);
      const bool positive = r.matches[b].labels[a] != 0;
      if (!positive && !neg_selected) {
        for (int j = 0; j < 3; ++j) EXPECT_EQ(gc.at(b, 0, a, j), 0.0);
      }
      if (!positive) {
        for (int j = 0; j < 4; ++j) EXPECT_EQ(gl.at(b, 0, a, j), 0.0);
      }
    }
}

TEST(MultiboxLoss, NonNegativeOnRandomInstances) {
  std::mt19937_64 rng(17);
  for (int t = 0; t < 50; ++t) {
    const LossCase c = random_case(rng, 30, 2);
    Tape<double> tape;
    auto r = multibox_loss(tape, tape.input(random_tensor<double>({2, 1, 30, 4}, t, -3, 3)),
                           tape.input(random_tensor<double>({2, 1, 30, 3}, t + 99, -3, 3)), c.anchors, c.targets,
                           Variances{}, LossConfig{});
    EXPECT_GE(r.breakdown.total, 0.0);
    EXPECT_NEAR(r.breakdown.total, (r.breakdown.loc_term + r.breakdown.conf_term) / r.breakdown.num_positive, 1e-12);
  }
}

TEST(MultiboxLoss, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 10; ++t) {
    const LossCase c = random_case(rng, 40, 2);
    const auto loc0 = random_tensor<double>({2, 1, 40, 4}, 300 + t, -2, 2);
    const auto conf0 = random_tensor<double>({2, 1, 40, 3}, 400 + t, -2, 2);
    const double eloc = grad_check(
        [&](Tape<double>& tape, Var x) {
          return multibox_loss(tape, x, tape.input(conf0, false), c.anchors, c.targets, Variances{}, LossConfig{})
              .total;
        },
        loc0);
    const double econf = grad_check(
        [&](Tape<double>& tape, Var x) {
          return multibox_loss(tape, tape.input(loc0, false), x, c.anchors, c.targets, Variances{}, LossConfig{})
              .total;
        },
        conf0);
    EXPECT_LT(eloc, 1e-4);
    EXPECT_LT(econf, 1e-4);
  }
}

TEST(MultiboxLoss, ShapeMismatchIsDimensionError) {
  const DefaultBoxSet anchors = box_set({{0, 0, 0.5, 0.5}, {0.5, 0.5, 1, 1}});
  Tape<double> tape;
  Var loc = tape.input(Tensor<double>({1, 1, 3, 4}));
  Var conf = tape.input(Tensor<double>({1, 1, 2, 3}));
  EXPECT_THROW(multibox_loss(tape, loc, conf, anchors, {{}}, Variances{}, LossConfig{}), DimensionError);
}

}  // namespace
}  // namespace stairnet
