#pragma once
// Head outputs to final detections: softmax, per-class thresholding, box
// decoding, greedy NMS and top-k capping.

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "stairnet/anchors.hpp"
#include "stairnet/tensor.hpp"

namespace stairnet {

struct DecodeConfig {
  double score_threshold = 0.01;
  double nms_iou = 0.45;
  int per_class_topk = 200;
  int image_topk = 200;

  void validate() const;
};

struct Detection {
  int image_id = 0;
  int class_id = 0;
  double score = 0;
  BoxXYXY box;
};

/// Greedy NMS: visits boxes by descending score (ties: lower index), keeping a
/// box unless its IoU with an already kept box exceeds `iou_thresh`. Returns
/// kept indices in visiting order; stops once `max_keep` boxes are kept
/// (negative: no limit).
std::vector<int> nms(const std::vector<BoxXYXY>& boxes, const std::vector<double>& scores, double iou_thresh,
                     int max_keep = -1);

/// loc: A x 4 offsets, conf: A x C logits of one image (row-major). Output is
/// sorted by score descending, ties broken by class id then per-class NMS order.
std::vector<Detection> decode_detections(std::span<const double> loc, std::span<const double> conf, int num_classes,
                                         const DefaultBoxSet& anchors, const Variances& variances,
                                         const DecodeConfig& cfg, int image_id = 0);

/// Batched form over head outputs (n x 1 x A x 4 and n x 1 x A x C); image ids
/// are first_image_id + batch index.
template <typename T>
std::vector<Detection> decode_batch(const Tensor<T>& loc, const Tensor<T>& conf, const DefaultBoxSet& anchors,
                                    const Variances& variances, const DecodeConfig& cfg, int first_image_id = 0);

/// One line per detection: image_id,class_id,score,x_min,y_min,x_max,y_max
/// with six decimals for reals.
std::string format_detection(const Detection& d);
void write_detections(std::ostream& os, const std::vector<Detection>& dets);
/// Throws ParseError naming the 1-based line number.
std::vector<Detection> read_detections(std::istream& is);

}  // namespace stairnet
