#include "stairnet/detection.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "stairnet/errors.hpp"

namespace stairnet {

void DecodeConfig::validate() const {
  if (!(score_threshold > 0 && score_threshold < 1)) throw ConfigError("score threshold must lie in (0,1)");
  if (!(nms_iou > 0 && nms_iou < 1)) throw ConfigError("nms iou threshold must lie in (0,1)");
  if (per_class_topk <= 0 || image_topk <= 0) throw ConfigError("top-k caps must be positive");
}

std::vector<int> nms(const std::vector<BoxXYXY>& boxes, const std::vector<double>& scores, double iou_thresh,
                     int max_keep) {
  if (boxes.size() != scores.size()) throw DimensionError("nms: boxes and scores differ in length");
  std::vector<int> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] > scores[b]; });
  std::vector<int> kept;
  for (int i : order) {
    if (max_keep >= 0 && static_cast<int>(kept.size()) >= max_keep) break;
    bool suppressed = false;
    for (int k : kept)
      if (iou(boxes[i], boxes[k]) > iou_thresh) {
        suppressed = true;
        break;
      }
    if (!suppressed) kept.push_back(i);
  }
  return kept;
}

std::vector<Detection> decode_detections(std::span<const double> loc, std::span<const double> conf, int num_classes,
                                         const DefaultBoxSet& anchors, const Variances& variances,
                                         const DecodeConfig& cfg, int image_id) {
  const std::size_t na = anchors.size();
  if (loc.size() != na * 4 || conf.size() != na * num_classes)
    throw DimensionError("decode_detections: outputs do not match the anchor count");

  std::vector<double> prob(na * num_classes);
  for (std::size_t a = 0; a < na; ++a) {
    const double* z = &conf[a * num_classes];
    double* p = &prob[a * num_classes];
    const double mx = *std::max_element(z, z + num_classes);
    double s = 0;
    for (int j = 0; j < num_classes; ++j) s += (p[j] = std::exp(z[j] - mx));
    for (int j = 0; j < num_classes; ++j) p[j] /= s;
  }

  std::vector<BoxXYXY> decoded(na);
  std::vector<char> have(na, 0);
  std::vector<Detection> out;
  for (int c = 1; c < num_classes; ++c) {
    std::vector<BoxXYXY> boxes;
    std::vector<double> scores;
    for (std::size_t a = 0; a < na; ++a) {
      const double s = prob[a * num_classes + c];
      if (s < cfg.score_threshold) continue;
      if (!have[a]) {
        decoded[a] = decode_box({loc[a * 4], loc[a * 4 + 1], loc[a * 4 + 2], loc[a * 4 + 3]}, anchors.boxes[a],
                                variances);
        have[a] = 1;
      }
      boxes.push_back(decoded[a]);
      scores.push_back(s);
    }
    for (int k : nms(boxes, scores, cfg.nms_iou, cfg.per_class_topk))
      out.push_back({image_id, c, scores[k], boxes[k]});
  }
  std::stable_sort(out.begin(), out.end(), [](const Detection& a, const Detection& b) { return a.score > b.score; });
  if (static_cast<int>(out.size()) > cfg.image_topk) out.resize(cfg.image_topk);
  return out;
}

template <typename T>
std::vector<Detection> decode_batch(const Tensor<T>& loc, const Tensor<T>& conf, const DefaultBoxSet& anchors,
                                    const Variances& variances, const DecodeConfig& cfg, int first_image_id) {
  const int n = loc.n();
  const std::size_t na = anchors.size();
  const int nc = conf.w();
  if (loc.shape() != Shape4{n, 1, static_cast<int>(na), 4} || conf.n() != n || conf.h() != static_cast<int>(na))
    throw DimensionError("decode_batch: head outputs do not match the anchor set");
  std::vector<std::vector<Detection>> per_image(n);
#pragma omp parallel for schedule(dynamic)
  for (int b = 0; b < n; ++b) {
    std::vector<double> l(na * 4), c(na * nc);
    for (std::size_t i = 0; i < l.size(); ++i) l[i] = loc[b * l.size() + i];
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = conf[b * c.size() + i];
    per_image[b] = decode_detections(l, c, nc, anchors, variances, cfg, first_image_id + b);
  }
  std::vector<Detection> out;
  for (auto& v : per_image) out.insert(out.end(), v.begin(), v.end());
  return out;
}

std::string format_detection(const Detection& d) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d,%d,%.6f,%.6f,%.6f,%.6f,%.6f", d.image_id, d.class_id, d.score, d.box.x_min,
                d.box.y_min, d.box.x_max, d.box.y_max);
  return buf;
}

void write_detections(std::ostream& os, const std::vector<Detection>& dets) {
  for (const auto& d : dets) os << format_detection(d) << '\n';
}

std::vector<Detection> read_detections(std::istream& is) {
  std::vector<Detection> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    for (char& ch : line)
      if (ch == ',') ch = ' ';
    std::istringstream ss(line);
    Detection d;
    if (!(ss >> d.image_id >> d.class_id >> d.score >> d.box.x_min >> d.box.y_min >> d.box.x_max >> d.box.y_max))
      throw ParseError("detections line " + std::to_string(lineno) + ": expected 7 comma-separated fields");
    std::string rest;
    if (ss >> rest) throw ParseError("detections line " + std::to_string(lineno) + ": trailing data");
    out.push_back(d);
  }
  return out;
}

template std::vector<Detection> decode_batch<float>(const Tensor<float>&, const Tensor<float>&, const DefaultBoxSet&,
                                                    const Variances&, const DecodeConfig&, int);
template std::vector<Detection> decode_batch<double>(const Tensor<double>&, const Tensor<double>&,
                                                     const DefaultBoxSet&, const Variances&, const DecodeConfig&, int);

}  // namespace stairnet
