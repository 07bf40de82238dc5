#pragma once
// Anchor matching, hard negative mining and the multibox objective.

#include <span>
#include <vector>

#include "stairnet/anchors.hpp"
#include "stairnet/autograd.hpp"

namespace stairnet {

/// Ground-truth box with a foreground label in [1, num_classes); 0 is background.
struct GtBox {
  BoxXYXY box;
  int label = 1;
};

struct MatchResult {
  std::vector<int> labels;    // per anchor, 0 = background
  std::vector<int> gt_index;  // per anchor, -1 when background
  int num_positive = 0;
};

struct LossConfig {
  double iou_threshold = 0.5;
  double neg_ratio = 3.0;

  void validate() const;
};

/// Step 1: GT/anchor pairs are claimed greedily by descending IoU (ties: lower
/// GT index, then lower anchor index) until every GT holds one anchor, so each
/// GT keeps its best still-free anchor regardless of the threshold. Step 2:
/// every other anchor whose best IoU reaches `threshold` takes that GT (ties:
/// lower GT index).
MatchResult match_anchors(const std::vector<BoxXYXY>& anchors, const std::vector<GtBox>& gts, double threshold);
MatchResult match_anchors(const DefaultBoxSet& anchors, const std::vector<GtBox>& gts, double threshold);

/// Background cross-entropy logsumexp(z) - z_0 of one anchor's logits.
double background_loss(std::span<const double> logits);

/// conf: A x C logits of one image, row-major. Returns the selected negative
/// anchors in ascending index order: the min(floor(ratio * N), available)
/// negatives with the largest background loss, ties by lower anchor index.
std::vector<int> hard_negative_mining(std::span<const double> conf, int num_classes, const MatchResult& match,
                                      double ratio);

struct LossBreakdown {
  double total = 0;
  double loc_term = 0;   // summed over the batch, before normalization
  double conf_term = 0;  // summed over the batch, before normalization
  int num_positive = 0;
};

template <typename T>
struct MultiboxLoss {
  Var total;  // 1x1x1x1
  LossBreakdown breakdown;
  std::vector<MatchResult> matches;
  std::vector<std::vector<int>> negatives;
};

/// loc: n x 1 x A x 4 offsets, conf: n x 1 x A x C logits. The total is
/// (loc_term + conf_term) / N with N the positives of the whole batch, or 0
/// when N = 0. smooth-L1 switches from quadratic to linear at |d| = 1.
template <typename T>
MultiboxLoss<T> multibox_loss(Tape<T>& tape, Var loc, Var conf, const DefaultBoxSet& anchors,
                              const std::vector<std::vector<GtBox>>& targets, const Variances& variances,
                              const LossConfig& cfg);

/// As above with precomputed matches.
template <typename T>
MultiboxLoss<T> multibox_loss(Tape<T>& tape, Var loc, Var conf, const DefaultBoxSet& anchors,
                              const std::vector<std::vector<GtBox>>& targets, std::vector<MatchResult> matches,
                              const Variances& variances, const LossConfig& cfg);

}  // namespace stairnet
