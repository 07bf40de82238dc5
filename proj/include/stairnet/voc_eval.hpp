#pragma once
// VOC-style average precision with per-class area buckets and a
// recall-restricted summary.

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "stairnet/anchors.hpp"
#include "stairnet/detection.hpp"

namespace stairnet {

enum class SizeBucket { kSmall = 0, kMedium = 1, kLarge = 2, kUnassigned = 3 };
std::string to_string(SizeBucket b);

struct GroundTruth {
  int image_id = 0;
  int class_id = 0;
  BoxXYXY box;
  SizeBucket bucket = SizeBucket::kUnassigned;
};

/// Buckets for one class given box areas: after a stable ascending sort, rank
/// r < floor(0.25 n) is small, r < floor(0.75 n) medium, the rest large.
std::vector<SizeBucket> bucket_by_area(const std::vector<double>& areas);
/// Applies bucket_by_area to each class separately.
void assign_scale_buckets(std::vector<GroundTruth>& gts);

enum class ApInterp { kElevenPoint, kAllPoint };

/// Precision/recall after each counted detection of one class, in rank order.
struct PrCurve {
  std::vector<double> precision;
  std::vector<double> recall;
  int num_gt = 0;  // active ground truths (recall denominator)
};

/// Detections are ranked by score descending, ties by (image_id, x_min,
/// y_min, x_max, y_max) ascending, so the result does not depend on input
/// order. Each detection is matched to the highest-IoU GT of its image and
/// class among unmatched active GTs and all ignored GTs (ties: lower GT input
/// index), provided IoU >= iou_thresh. A match to an active GT is a true
/// positive; a match to an ignored GT drops the detection; no match is a false
/// positive. With `bucket` set, GTs of other buckets are ignored.
PrCurve pr_curve(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts, int class_id,
                 double iou_thresh = 0.5, std::optional<SizeBucket> bucket = std::nullopt);

/// Active flags for small, medium, large.
using BucketSet = std::array<bool, 3>;

/// GTs whose bucket is not in `active` are ignored. Every GT of the class must
/// have a bucket (StateError otherwise).
PrCurve pr_curve(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts, int class_id,
                 double iou_thresh, const BucketSet& active);

double average_precision(const PrCurve& pr, ApInterp interp);
/// Largest precision at recall >= r (0 when r is unreachable).
double interpolated_precision(const PrCurve& pr, double r);
/// Integral of the interpolated precision over [floor, 1] divided by 1 - floor.
double recall_restricted_ap(const PrCurve& pr, double recall_floor);

/// NaN when the class has no active ground truth.
double compute_ap(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts, int class_id,
                  double iou_thresh = 0.5, ApInterp interp = ApInterp::kElevenPoint,
                  std::optional<SizeBucket> bucket = std::nullopt);

double compute_ap(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts, int class_id,
                  const BucketSet& active, double iou_thresh = 0.5, ApInterp interp = ApInterp::kElevenPoint);

/// Mean over classes with ground truth of recall_restricted_ap.
double map_at_recall(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts, double recall_floor,
                     double iou_thresh = 0.5);

struct EvalOptions {
  double iou_threshold = 0.5;
  ApInterp interp = ApInterp::kElevenPoint;
  bool buckets = true;
  double recall_floor = 0.7;
  std::vector<double> recall_grid{0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
};

struct ClassReport {
  int class_id = 0;
  int num_gt = 0;
  double ap = 0;
  std::array<double, 3> bucket_ap{};  // NaN when the bucket is empty or buckets are off
  std::vector<double> precision_at_recall;
  double ap_above_floor = 0;
};

struct EvalReport {
  std::vector<ClassReport> classes;  // classes with at least one ground truth, ascending id
  double map = 0;
  std::array<double, 3> bucket_map{};
  bool bucketed = false;  // bucket fields are NaN otherwise
  std::vector<double> recall_grid;
  std::vector<double> precision_at_recall;  // class mean per grid point
  double recall_floor = 0.7;
  double map_at_recall = 0;
};

/// Ground-truth buckets are (re)assigned from areas when opt.buckets is set.
EvalReport evaluate(const std::vector<Detection>& dets, std::vector<GroundTruth> gts, const EvalOptions& opt = {});

std::string format_report_text(const EvalReport& r);
std::string format_report_csv(const EvalReport& r);

/// One record per line: image_id,class_id,x_min,y_min,x_max,y_max.
void write_ground_truth(std::ostream& os, const std::vector<GroundTruth>& gts);
/// Throws ParseError naming the 1-based line number.
std::vector<GroundTruth> read_ground_truth(std::istream& is);

}  // namespace stairnet
