#pragma once
// Hand-constructed precision/recall scenarios with closed-form AP values, and
// random GT and detection sets for property checks.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "stairnet/voc_eval.hpp"

namespace stairnet::metric_cases {

inline GroundTruth gt(int image, double x, double y, double s, int cls = 1) {
  return {image, cls, {x, y, x + s, y + s}};
}
inline Detection det(int image, double score, double x, double y, double s, int cls = 1) {
  return {image, cls, score, {x, y, x + s, y + s}};
}

struct HandCase {
  std::string name;
  std::vector<GroundTruth> gts;
  std::vector<Detection> dets;
  ApInterp interp = ApInterp::kElevenPoint;
  double expected = 0;
};

inline std::vector<HandCase> hand_cases() {
  using A = ApInterp;
  const std::vector<GroundTruth> two{gt(0, 0.1, 0.1, 0.2), gt(1, 0.5, 0.5, 0.2)};
  // Ranks TP, FP, TP over two GTs.
  const std::vector<Detection> tp_fp_tp{det(0, 0.9, 0.1, 0.1, 0.2), det(0, 0.8, 0.6, 0.0, 0.2),
                                        det(1, 0.7, 0.5, 0.5, 0.2)};
  const std::vector<GroundTruth> three{gt(0, 0.0, 0.0, 0.2), gt(0, 0.5, 0.5, 0.2), gt(1, 0.3, 0.3, 0.2)};
  // Two hits, then two misses; the third GT is never found.
  const std::vector<Detection> missed{det(0, 0.9, 0.0, 0.0, 0.2), det(0, 0.8, 0.5, 0.5, 0.2),
                                      det(1, 0.7, 0.7, 0.0, 0.2), det(1, 0.6, 0.0, 0.7, 0.2)};
  const std::vector<GroundTruth> one{gt(0, 0.1, 0.1, 0.3)};
  return {
      {"single perfect detection", {gt(0, 0.1, 0.1, 0.4)}, {det(0, 0.5, 0.11, 0.1, 0.4)}, A::kElevenPoint, 1.0},
      {"tp fp tp, eleven-point", two, tp_fp_tp, A::kElevenPoint, (6 * 1.0 + 5 * (2.0 / 3.0)) / 11},
      {"tp fp tp, all-point", two, tp_fp_tp, A::kAllPoint, 0.5 + 0.5 * (2.0 / 3.0)},
      {"false positive first", one, {det(0, 0.9, 0.6, 0.6, 0.3), det(0, 0.4, 0.1, 0.1, 0.3)}, A::kElevenPoint, 0.5},
      {"missed ground truth, eleven-point", three, missed, A::kElevenPoint, 7.0 / 11.0},
      {"missed ground truth, all-point", three, missed, A::kAllPoint, 2.0 / 3.0},
      {"duplicate detection", {gt(0, 0.2, 0.2, 0.3)}, {det(0, 0.9, 0.2, 0.2, 0.3), det(0, 0.8, 0.2, 0.2, 0.3)},
       A::kElevenPoint, 1.0},
      {"no detections", one, {}, A::kElevenPoint, 0.0},
  };
}

/// Three GTs per image of sides in [0.05, 0.45], classes cycling 1..classes.
inline std::vector<GroundTruth> random_gts(std::mt19937_64& rng, int images, int classes) {
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<GroundTruth> gts;
  for (int i = 0; i < images; ++i)
    for (int k = 0; k < 3; ++k) {
      const double s = 0.05 + 0.4 * u(rng);
      gts.push_back(gt(i, (1 - s) * u(rng), (1 - s) * u(rng), s, 1 + k % classes));
    }
  return gts;
}

/// A jittered hit and a random false positive per GT, with quantized scores.
inline std::vector<Detection> noisy_dets(std::mt19937_64& rng, const std::vector<GroundTruth>& gts) {
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<Detection> dets;
  for (const auto& g : gts) {
    const double j = 0.05 * (u(rng) - 0.5);
    dets.push_back({g.image_id, g.class_id, std::round(u(rng) * 20) / 20,
                    {g.box.x_min + j, g.box.y_min, g.box.x_max + j, g.box.y_max}});
    dets.push_back({g.image_id, g.class_id, std::round(u(rng) * 20) / 20, {0.1, 0.1, 0.1 + 0.3 * u(rng), 0.5}});
  }
  return dets;
}

}  // namespace stairnet::metric_cases
