#include "stairnet/anchors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "stairnet/errors.hpp"

namespace stairnet {

double BoxXYXY::area() const { return std::max(0.0, width()) * std::max(0.0, height()); }

BoxXYXY to_corners(const CenterBox& b) {
  return {b.cx - 0.5 * b.w, b.cy - 0.5 * b.h, b.cx + 0.5 * b.w, b.cy + 0.5 * b.h};
}

CenterBox to_center(const BoxXYXY& b) {
  return {0.5 * (b.x_min + b.x_max), 0.5 * (b.y_min + b.y_max), b.width(), b.height()};
}

BoxXYXY clip_unit(const BoxXYXY& b) {
  auto c = [](double v) { return std::clamp(v, 0.0, 1.0); };
  return {c(b.x_min), c(b.y_min), c(b.x_max), c(b.y_max)};
}

double iou(const BoxXYXY& a, const BoxXYXY& b) {
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  const double inter = (iw > 0 && ih > 0) ? iw * ih : 0.0;
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

Offsets encode_box(const BoxXYXY& gt, const CenterBox& anchor, const Variances& v) {
  if (!(gt.width() > 0) || !(gt.height() > 0)) throw EncodeError("cannot encode a box with zero width or height");
  if (!(anchor.w > 0) || !(anchor.h > 0)) throw EncodeError("anchor has non-positive size");
  const CenterBox g = to_center(gt);
  return {(g.cx - anchor.cx) / (anchor.w * v.center), (g.cy - anchor.cy) / (anchor.h * v.center),
          std::log(g.w / anchor.w) / v.size, std::log(g.h / anchor.h) / v.size};
}

BoxXYXY decode_box(const Offsets& o, const CenterBox& anchor, const Variances& v) {
  CenterBox c;
  c.cx = anchor.cx + o[0] * v.center * anchor.w;
  c.cy = anchor.cy + o[1] * v.center * anchor.h;
  c.w = anchor.w * std::exp(o[2] * v.size);
  c.h = anchor.h * std::exp(o[3] * v.size);
  return clip_unit(to_corners(c));
}

void BoxSpec::validate() const {
  if (scales.size() != 5) throw ConfigError("boxes.scales needs 5 entries");
  if (grids.size() != scales.size()) throw ConfigError("box grids and scales differ in length");
  for (std::size_t i = 0; i < scales.size(); ++i) {
    if (!(scales[i] > 0 && scales[i] <= 1)) throw ConfigError("boxes.scales must lie in (0,1]");
    if (i > 0 && !(scales[i] > scales[i - 1])) throw ConfigError("boxes.scales must be strictly increasing");
    if (grids[i] <= 0) throw ConfigError("box grid sizes must be positive");
  }
  if (!(extra_scale > 0)) throw ConfigError("boxes.extra_scale must be positive");
  for (double ar : aspect_ratios)
    if (!(ar > 0)) throw ConfigError("boxes.aspect_ratios must be positive");
  if (!(variances.center > 0) || !(variances.size > 0)) throw ConfigError("boxes.variances must be positive");
}

DefaultBoxSet generate_default_boxes(const BoxSpec& spec) {
  spec.validate();
  DefaultBoxSet set;
  set.boxes_per_cell = spec.boxes_per_cell();
  const int levels = static_cast<int>(spec.scales.size());

  for (int k = 0; k < levels; ++k) {
    set.level_offsets.push_back(static_cast<int>(set.boxes.size()));
    const double s = spec.scales[k];
    const double s_next = k + 1 < levels ? spec.scales[k + 1] : spec.extra_scale;
    std::vector<std::array<double, 2>> shapes{{s, s}, {std::sqrt(s * s_next), std::sqrt(s * s_next)}};
    for (double ar : spec.aspect_ratios) {
      const double r = std::sqrt(ar);
      shapes.push_back({s * r, s / r});
      shapes.push_back({s / r, s * r});
    }
    const int g = spec.grids[k];
    for (int i = 0; i < g; ++i) {
      for (int j = 0; j < g; ++j) {
        const double cx = (j + 0.5) / g, cy = (i + 0.5) / g;
        for (int v = 0; v < static_cast<int>(shapes.size()); ++v) {
          BoxXYXY c = to_corners({cx, cy, shapes[v][0], shapes[v][1]});
          if (spec.clip) c = clip_unit(c);
          set.corners.push_back(c);
          set.boxes.push_back(to_center(c));
          set.provenance.push_back({k, i, j, v});
        }
      }
    }
  }
  set.level_offsets.push_back(static_cast<int>(set.boxes.size()));
  return set;
}

}  // namespace stairnet
