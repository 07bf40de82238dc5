#include "stairnet/multibox_loss.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "stairnet/errors.hpp"

namespace stairnet {

void LossConfig::validate() const {
  if (!(iou_threshold > 0 && iou_threshold < 1)) throw ConfigError("loss.iou_threshold must lie in (0,1)");
  if (!(neg_ratio >= 0)) throw ConfigError("loss.neg_ratio must be non-negative");
}

MatchResult match_anchors(const std::vector<BoxXYXY>& anchors, const std::vector<GtBox>& gts, double threshold) {
  if (!(threshold > 0 && threshold < 1)) throw ConfigError("matching threshold must lie in (0,1)");
  const int na = static_cast<int>(anchors.size());
  const int ng = static_cast<int>(gts.size());
  MatchResult m;
  m.labels.assign(na, 0);
  m.gt_index.assign(na, -1);
  if (ng == 0 || na == 0) return m;

  std::vector<double> overlap(static_cast<std::size_t>(ng) * na);
  for (int g = 0; g < ng; ++g)
    for (int a = 0; a < na; ++a) overlap[static_cast<std::size_t>(g) * na + a] = iou(gts[g].box, anchors[a]);

  std::vector<char> gt_done(ng, 0), anchor_taken(na, 0);
  for (int round = 0; round < std::min(ng, na); ++round) {
    int best_g = -1, best_a = -1;
    double best = -1.0;
    for (int g = 0; g < ng; ++g) {
      if (gt_done[g]) continue;
      const double* row = &overlap[static_cast<std::size_t>(g) * na];
      for (int a = 0; a < na; ++a)
        if (!anchor_taken[a] && row[a] > best) {
          best = row[a];
          best_g = g;
          best_a = a;
        }
    }
    gt_done[best_g] = 1;
    anchor_taken[best_a] = 1;
    m.gt_index[best_a] = best_g;
  }

  for (int a = 0; a < na; ++a) {
    if (anchor_taken[a]) continue;
    int best_g = 0;
    for (int g = 1; g < ng; ++g)
      if (overlap[static_cast<std::size_t>(g) * na + a] > overlap[static_cast<std::size_t>(best_g) * na + a]) best_g = g;
    if (overlap[static_cast<std::size_t>(best_g) * na + a] >= threshold) m.gt_index[a] = best_g;
  }

  for (int a = 0; a < na; ++a)
    if (m.gt_index[a] >= 0) {
      m.labels[a] = gts[m.gt_index[a]].label;
      ++m.num_positive;
    }
  return m;
}

MatchResult match_anchors(const DefaultBoxSet& anchors, const std::vector<GtBox>& gts, double threshold) {
  return match_anchors(anchors.corners, gts, threshold);
}

double background_loss(std::span<const double> z) {
  const double mx = *std::max_element(z.begin(), z.end());
  double s = 0;
  for (double v : z) s += std::exp(v - mx);
  return mx + std::log(s) - z[0];
}

std::vector<int> hard_negative_mining(std::span<const double> conf, int num_classes, const MatchResult& match,
                                      double ratio) {
  const int na = static_cast<int>(match.labels.size());
  if (conf.size() != static_cast<std::size_t>(na) * num_classes)
    throw DimensionError("hard_negative_mining: logits do not match the anchor count");
  std::vector<int> candidates;
  std::vector<double> loss(na, 0.0);
  for (int a = 0; a < na; ++a) {
    if (match.labels[a] != 0) continue;
    candidates.push_back(a);
    loss[a] = background_loss(conf.subspan(static_cast<std::size_t>(a) * num_classes, num_classes));
  }
  const std::size_t want =
      std::min(candidates.size(), static_cast<std::size_t>(std::floor(ratio * match.num_positive)));
  auto harder = [&](int x, int y) { return loss[x] > loss[y] || (loss[x] == loss[y] && x < y); };
  std::partial_sort(candidates.begin(), candidates.begin() + want, candidates.end(), harder);
  candidates.resize(want);
  std::sort(candidates.begin(), candidates.end());
  return candidates;
}

namespace {

double smooth_l1(double d) {
  const double a = std::abs(d);
  return a < 1.0 ? 0.5 * d * d : a - 0.5;
}

double smooth_l1_grad(double d) {
  if (d > 1.0) return 1.0;
  if (d < -1.0) return -1.0;
  return d;
}

}  // namespace

template <typename T>
MultiboxLoss<T> multibox_loss(Tape<T>& tape, Var loc, Var conf, const DefaultBoxSet& anchors,
                              const std::vector<std::vector<GtBox>>& targets, const Variances& variances,
                              const LossConfig& cfg) {
  cfg.validate();
  std::vector<MatchResult> matches;
  for (const auto& gts : targets) matches.push_back(match_anchors(anchors, gts, cfg.iou_threshold));
  return multibox_loss(tape, loc, conf, anchors, targets, std::move(matches), variances, cfg);
}

template <typename T>
MultiboxLoss<T> multibox_loss(Tape<T>& tape, Var loc, Var conf, const DefaultBoxSet& anchors,
                              const std::vector<std::vector<GtBox>>& targets, std::vector<MatchResult> matches,
                              const Variances& variances, const LossConfig& cfg) {
  const Tensor<T>& lv = tape.value(loc);
  const Tensor<T>& cv = tape.value(conf);
  const int n = lv.n();
  const int na = static_cast<int>(anchors.size());
  const int nc = cv.w();
  if (lv.shape() != Shape4{n, 1, na, 4}) throw DimensionError("multibox_loss: loc shape " + lv.shape().str());
  if (cv.n() != n || cv.c() != 1 || cv.h() != na) throw DimensionError("multibox_loss: conf shape " + cv.shape().str());
  if (static_cast<int>(targets.size()) != n || static_cast<int>(matches.size()) != n)
    throw DimensionError("multibox_loss: batch has " + std::to_string(n) + " images but " +
                         std::to_string(targets.size()) + " target lists");

  MultiboxLoss<T> out;
  Tensor<T> dloc(lv.shape());
  Tensor<T> dconf(cv.shape());
  std::vector<double> logits(static_cast<std::size_t>(na) * nc);
  std::vector<double> prob(nc);

  int total_pos = 0;
  for (const auto& m : matches) total_pos += m.num_positive;
  const double inv_n = total_pos > 0 ? 1.0 / total_pos : 0.0;

  for (int b = 0; b < n; ++b) {
    const MatchResult& m = matches[b];
    for (std::size_t i = 0; i < logits.size(); ++i) logits[i] = cv[static_cast<std::size_t>(b) * na * nc + i];
    std::vector<int> negs = hard_negative_mining(logits, nc, m, cfg.neg_ratio);

    auto cross_entropy = [&](int a, int label) {
      const double* z = &logits[static_cast<std::size_t>(a) * nc];
      const double mx = *std::max_element(z, z + nc);
      double s = 0;
      for (int j = 0; j < nc; ++j) s += (prob[j] = std::exp(z[j] - mx));
      for (int j = 0; j < nc; ++j) {
        const double grad = prob[j] / s - (j == label ? 1.0 : 0.0);
        dconf[(static_cast<std::size_t>(b) * na + a) * nc + j] = static_cast<T>(grad * inv_n);
      }
      return mx + std::log(s) - z[label];
    };

    for (int a = 0; a < na; ++a) {
      if (m.labels[a] == 0) continue;
      if (m.labels[a] >= nc) throw DimensionError("multibox_loss: label exceeds class count");
      const Offsets t = encode_box(targets[b][m.gt_index[a]].box, anchors.boxes[a], variances);
      for (int j = 0; j < 4; ++j) {
        const std::size_t idx = (static_cast<std::size_t>(b) * na + a) * 4 + j;
        const double d = static_cast<double>(lv[idx]) - t[j];
        out.breakdown.loc_term += smooth_l1(d);
        dloc[idx] = static_cast<T>(smooth_l1_grad(d) * inv_n);
      }
      out.breakdown.conf_term += cross_entropy(a, m.labels[a]);
    }
    for (int a : negs) out.breakdown.conf_term += cross_entropy(a, 0);
    out.negatives.push_back(std::move(negs));
  }
  out.breakdown.num_positive = total_pos;
  out.breakdown.total = (out.breakdown.loc_term + out.breakdown.conf_term) * inv_n;
  out.matches = std::move(matches);

  out.total = tape.record("multibox_loss", Tensor<T>({1, 1, 1, 1}, static_cast<T>(out.breakdown.total)), {loc, conf},
                          [loc, conf, dloc = std::move(dloc), dconf = std::move(dconf)](Tape<T>& t, const Tensor<T>& g) {
                            const T s = g[0];
                            auto scaled = [s](const Tensor<T>& d) {
                              Tensor<T> r(d.shape());
                              for (std::size_t i = 0; i < d.size(); ++i) r[i] = d[i] * s;
                              return r;
                            };
                            if (t.needs_grad(loc)) t.accumulate(loc, scaled(dloc));
                            if (t.needs_grad(conf)) t.accumulate(conf, scaled(dconf));
                          });
  return out;
}

#define STAIRNET_INSTANTIATE(T)                                                                                 \
  template MultiboxLoss<T> multibox_loss<T>(Tape<T>&, Var, Var, const DefaultBoxSet&,                           \
                                            const std::vector<std::vector<GtBox>>&, const Variances&,           \
                                            const LossConfig&);                                                 \
  template MultiboxLoss<T> multibox_loss<T>(Tape<T>&, Var, Var, const DefaultBoxSet&,                           \
                                            const std::vector<std::vector<GtBox>>&, std::vector<MatchResult>,   \
                                            const Variances&, const LossConfig&);

STAIRNET_INSTANTIATE(float)
STAIRNET_INSTANTIATE(double)
#undef STAIRNET_INSTANTIATE

}  // namespace stairnet
