#pragma once
// Brute-force references for the detection pipeline and randomized
// comparisons against them. Shared by the unit tests and the acceptance run.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <tuple>
#include <vector>

#include "stairnet/anchors.hpp"
#include "stairnet/detection.hpp"
#include "stairnet/multibox_loss.hpp"

namespace stairnet::oracle {

inline BoxXYXY random_box(std::mt19937_64& rng, double lo = 0.05, double hi = 0.45) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double w = lo + (hi - lo) * u(rng), h = lo + (hi - lo) * u(rng);
  const double x = (1 - w) * u(rng), y = (1 - h) * u(rng);
  return {x, y, x + w, y + h};
}

// Suppression-flag formulation: O(n^2) over every pair.
inline std::vector<int> nms(const std::vector<BoxXYXY>& boxes, const std::vector<double>& scores, double thr) {
  const int n = static_cast<int>(boxes.size());
  std::vector<bool> alive(n, true);
  std::vector<int> kept;
  for (;;) {
    int best = -1;
    for (int i = 0; i < n; ++i)
      if (alive[i] && (best < 0 || scores[i] > scores[best])) best = i;
    if (best < 0) break;
    kept.push_back(best);
    alive[best] = false;
    for (int i = 0; i < n; ++i)
      if (alive[i] && iou(boxes[i], boxes[best]) > thr) alive[i] = false;
  }
  return kept;
}

// Straight-line decode: every anchor, every class, no early exits.
inline std::vector<Detection> decode(const std::vector<double>& loc, const std::vector<double>& conf, int nc,
                                     const DefaultBoxSet& anchors, const DecodeConfig& cfg) {
  const int na = static_cast<int>(anchors.size());
  std::vector<Detection> all;
  for (int c = 1; c < nc; ++c) {
    std::vector<BoxXYXY> boxes;
    std::vector<double> scores;
    for (int a = 0; a < na; ++a) {
      double mx = conf[a * nc];
      for (int j = 0; j < nc; ++j) mx = std::max(mx, conf[a * nc + j]);
      double s = 0;
      for (int j = 0; j < nc; ++j) s += std::exp(conf[a * nc + j] - mx);
      const double p = std::exp(conf[a * nc + c] - mx) / s;
      boxes.push_back(decode_box({loc[a * 4], loc[a * 4 + 1], loc[a * 4 + 2], loc[a * 4 + 3]}, anchors.boxes[a],
                                 Variances{}));
      scores.push_back(p);
    }
    std::vector<BoxXYXY> fb;
    std::vector<double> fs;
    for (int a = 0; a < na; ++a)
      if (scores[a] >= cfg.score_threshold) {
        fb.push_back(boxes[a]);
        fs.push_back(scores[a]);
      }
    auto kept = oracle::nms(fb, fs, cfg.nms_iou);
    if (static_cast<int>(kept.size()) > cfg.per_class_topk) kept.resize(cfg.per_class_topk);
    for (int k : kept) all.push_back({0, c, fs[k], fb[k]});
  }
  std::vector<int> order(all.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (all[a].score != all[b].score) return all[a].score > all[b].score;
    return a < b;
  });
  std::vector<Detection> out;
  for (int i = 0; i < std::min<int>(order.size(), cfg.image_topk); ++i) out.push_back(all[order[i]]);
  return out;
}

// Sorted-pair formulation of the two-step rule.
inline MatchResult match(const std::vector<BoxXYXY>& anchors, const std::vector<GtBox>& gts, double thr) {
  const int na = static_cast<int>(anchors.size()), ng = static_cast<int>(gts.size());
  MatchResult m;
  m.labels.assign(na, 0);
  m.gt_index.assign(na, -1);
  std::vector<std::tuple<double, int, int>> pairs;
  for (int g = 0; g < ng; ++g)
    for (int a = 0; a < na; ++a) pairs.emplace_back(-iou(gts[g].box, anchors[a]), g, a);
  std::sort(pairs.begin(), pairs.end());
  std::vector<bool> gdone(ng), ataken(na);
  for (auto [neg, g, a] : pairs)
    if (!gdone[g] && !ataken[a]) {
      gdone[g] = ataken[a] = true;
      m.gt_index[a] = g;
    }
  for (int a = 0; a < na; ++a) {
    if (ataken[a]) continue;
    double best = -1;
    for (int g = 0; g < ng; ++g) {
      const double o = iou(gts[g].box, anchors[a]);
      if (o > best) {
        best = o;
        if (o >= thr) m.gt_index[a] = g;
      }
    }
  }
  for (int a = 0; a < na; ++a)
    if (m.gt_index[a] >= 0) {
      m.labels[a] = gts[m.gt_index[a]].label;
      ++m.num_positive;
    }
  return m;
}

// Full sort of background losses; ties keep the lower anchor index.
inline std::vector<int> mining(std::span<const double> conf, int nc, const MatchResult& m, double ratio) {
  std::vector<std::pair<double, int>> all;
  const int na = static_cast<int>(m.labels.size());
  for (int a = 0; a < na; ++a)
    if (m.labels[a] == 0) {
      double s = 0;
      for (int j = 0; j < nc; ++j) s += std::exp(conf[a * nc + j]);
      all.emplace_back(-(std::log(s) - conf[a * nc]), a);
    }
  std::sort(all.begin(), all.end());
  std::vector<int> out;
  const auto keep = static_cast<std::size_t>(ratio * m.num_positive);
  for (std::size_t i = 0; i < std::min(all.size(), keep); ++i) out.push_back(all[i].second);
  std::sort(out.begin(), out.end());
  return out;
}

struct Tally {
  int instances = 0;
  int mismatches = 0;
  int first_mismatch = -1;

  void record(bool equal) {
    if (!equal && first_mismatch < 0) first_mismatch = instances;
    mismatches += !equal;
    ++instances;
  }
};

inline bool same_detections(const std::vector<Detection>& a, const std::vector<Detection>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto &x = a[i], &y = b[i];
    if (x.image_id != y.image_id || x.class_id != y.class_id || x.score != y.score || x.box.x_min != y.box.x_min ||
        x.box.y_min != y.box.y_min || x.box.x_max != y.box.x_max || x.box.y_max != y.box.y_max)
      return false;
  }
  return true;
}

/// Sizes cycle 1..200 boxes; scores are quantized so ties occur.
inline Tally compare_nms(int instances, std::uint64_t seed, double thr = 0.45) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  Tally t;
  for (int i = 0; i < instances; ++i) {
    const int n = 1 + i % 200;
    std::vector<BoxXYXY> boxes;
    std::vector<double> scores;
    for (int k = 0; k < n; ++k) {
      boxes.push_back(random_box(rng));
      scores.push_back(std::round(u(rng) * 50) / 50);
    }
    t.record(stairnet::nms(boxes, scores, thr) == oracle::nms(boxes, scores, thr));
  }
  return t;
}

/// 50 random anchors against 1..6 ground truths per instance.
inline Tally compare_matching(int instances, std::uint64_t seed, double thr = 0.5) {
  std::mt19937_64 rng(seed);
  Tally t;
  for (int i = 0; i < instances; ++i) {
    std::vector<BoxXYXY> anchors;
    for (int k = 0; k < 50; ++k) anchors.push_back(random_box(rng, 0.05, 0.5));
    std::vector<GtBox> gts;
    for (int g = 0; g < 1 + i % 6; ++g) gts.push_back({random_box(rng, 0.05, 0.5), 1 + g % 3});
    const auto m = match_anchors(anchors, gts, thr);
    const auto o = oracle::match(anchors, gts, thr);
    t.record(m.gt_index == o.gt_index && m.labels == o.labels && m.num_positive == o.num_positive);
  }
  return t;
}

/// 80 anchors with repeated logit rows to force exact loss ties.
inline Tally compare_mining(int instances, std::uint64_t seed, double ratio = 3.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> logit(-3, 3);
  const int na = 80, nc = 4;
  Tally t;
  for (int i = 0; i < instances; ++i) {
    std::vector<double> z(na * nc);
    for (double& v : z) v = logit(rng);
    for (int a = 0; a < na; a += 9)
      for (int j = 0; j < nc; ++j) z[a * nc + j] = z[j];
    MatchResult m;
    m.labels.assign(na, 0);
    std::uniform_int_distribution<int> pick(0, na - 1);
    for (int k = 0; k < 1 + i % 7; ++k) m.labels[pick(rng)] = 1;
    m.num_positive = static_cast<int>(std::count(m.labels.begin(), m.labels.end(), 1));
    t.record(hard_negative_mining(z, nc, m, ratio) == oracle::mining(z, nc, m, ratio));
  }
  return t;
}

inline DefaultBoxSet small_anchor_set() {
  BoxSpec spec;
  spec.grids = {4, 2, 2, 1, 1};
  return generate_default_boxes(spec);
}

/// Random head outputs over a small anchor set, background-leaning logits.
inline Tally compare_decode(int instances, std::uint64_t seed) {
  const auto anchors = small_anchor_set();
  const int nc = 4;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  DecodeConfig cfg;
  cfg.per_class_topk = 15;
  cfg.image_topk = 30;
  Tally t;
  for (int i = 0; i < instances; ++i) {
    std::vector<double> loc(anchors.size() * 4), conf(anchors.size() * nc);
    for (double& v : loc) v = 0.5 * g(rng);
    for (std::size_t a = 0; a < anchors.size(); ++a) {
      conf[a * nc] = 2.0 + g(rng);
      for (int j = 1; j < nc; ++j) conf[a * nc + j] = 1.5 * g(rng);
    }
    t.record(same_detections(decode_detections(loc, conf, nc, anchors, Variances{}, cfg),
                             oracle::decode(loc, conf, nc, anchors, cfg)));
  }
  return t;
}

/// Largest corner error of decode(encode(gt)) over random boxes and anchors of `spec`.
inline double max_roundtrip_error(const BoxSpec& spec, int instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const DefaultBoxSet set = generate_default_boxes(spec);
  std::uniform_int_distribution<std::size_t> pick(0, set.size() - 1);
  double worst = 0;
  for (int i = 0; i < instances; ++i) {
    const BoxXYXY gt = random_box(rng);
    const CenterBox& a = set.boxes[pick(rng)];
    const BoxXYXY back = decode_box(encode_box(gt, a, spec.variances), a, spec.variances);
    worst = std::max({worst, std::abs(back.x_min - gt.x_min), std::abs(back.y_min - gt.y_min),
                      std::abs(back.x_max - gt.x_max), std::abs(back.y_max - gt.y_max)});
  }
  return worst;
}

}  // namespace stairnet::oracle
