#pragma once
// Default boxes and box geometry.

#include <array>
#include <cstddef>
#include <vector>

namespace stairnet {

struct BoxXYXY {
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;
  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const;
};

/// Center form (cx, cy, w, h), normalized.
struct CenterBox {
  double cx = 0, cy = 0, w = 0, h = 0;
};

BoxXYXY to_corners(const CenterBox& b);
CenterBox to_center(const BoxXYXY& b);
BoxXYXY clip_unit(const BoxXYXY& b);

/// Intersection over union; 0 when the union is empty.
double iou(const BoxXYXY& a, const BoxXYXY& b);

struct Variances {
  double center = 0.1;
  double size = 0.2;
};

using Offsets = std::array<double, 4>;

/// Throws EncodeError for a gt with zero width or height.
Offsets encode_box(const BoxXYXY& gt, const CenterBox& anchor, const Variances& v);
/// Inverse of encode_box, clipped to the unit square.
BoxXYXY decode_box(const Offsets& offsets, const CenterBox& anchor, const Variances& v);

struct BoxSpec {
  std::vector<double> scales{0.1, 0.2, 0.37, 0.54, 0.71};
  double extra_scale = 0.88;
  std::vector<double> aspect_ratios{2.0, 3.0};
  std::vector<int> grids{38, 19, 10, 5, 3};
  Variances variances;
  bool clip = true;

  int boxes_per_cell() const { return 2 + 2 * static_cast<int>(aspect_ratios.size()); }
  /// Throws ConfigError.
  void validate() const;
};

struct BoxProvenance {
  int level = 0, row = 0, col = 0, variant = 0;
};

/// Boxes ordered level-major, then row-major cell, then variant.
struct DefaultBoxSet {
  std::vector<CenterBox> boxes;
  std::vector<BoxXYXY> corners;
  std::vector<BoxProvenance> provenance;
  std::vector<int> level_offsets;  // first box index of each level, plus the total at the end
  int boxes_per_cell = 0;

  std::size_t size() const { return boxes.size(); }
};

/// Per cell: (s_k, s_k), (s', s') with s' = sqrt(s_k * s_next), then for every
/// aspect ratio ar the pair (s_k*sqrt(ar), s_k/sqrt(ar)), (s_k/sqrt(ar), s_k*sqrt(ar)).
DefaultBoxSet generate_default_boxes(const BoxSpec& spec);

}  // namespace stairnet
