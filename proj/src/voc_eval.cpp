#include "stairnet/voc_eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string_view>
#include <tuple>
#include <unordered_map>

#include "stairnet/errors.hpp"

namespace stairnet {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double mean_of_finite(const std::vector<double>& v) {
  double s = 0;
  int n = 0;
  for (double x : v)
    if (!std::isnan(x)) {
      s += x;
      ++n;
    }
  return n ? s / n : kNaN;
}

// Monotone envelope: envelope[i] = max precision at rank >= i.
std::vector<double> envelope(const PrCurve& pr) {
  std::vector<double> env(pr.precision);
  for (int i = static_cast<int>(env.size()) - 2; i >= 0; --i) env[i] = std::max(env[i], env[i + 1]);
  return env;
}

// mask[b] marks bucket b active (index 3: unassigned); null means all active.
PrCurve pr_curve_masked(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts, int class_id,
                        double iou_thresh, const std::array<bool, 4>* mask) {
  PrCurve pr;
  std::unordered_map<int, std::vector<std::size_t>> by_image;
  std::vector<char> ignored(gts.size(), 0), matched(gts.size(), 0);
  for (std::size_t i = 0; i < gts.size(); ++i) {
    if (gts[i].class_id != class_id) continue;
    by_image[gts[i].image_id].push_back(i);
    ignored[i] = mask && !(*mask)[static_cast<int>(gts[i].bucket)];
    if (!ignored[i]) ++pr.num_gt;
  }

  std::vector<const Detection*> ranked;
  for (const auto& d : dets)
    if (d.class_id == class_id) ranked.push_back(&d);
  std::sort(ranked.begin(), ranked.end(), [](const Detection* a, const Detection* b) {
    if (a->score != b->score) return a->score > b->score;
    return std::tie(a->image_id, a->box.x_min, a->box.y_min, a->box.x_max, a->box.y_max) <
           std::tie(b->image_id, b->box.x_min, b->box.y_min, b->box.x_max, b->box.y_max);
  });

  int tp = 0, fp = 0;
  for (const Detection* d : ranked) {
    std::ptrdiff_t best = -1;
    double best_iou = -1;
    auto it = by_image.find(d->image_id);
    if (it != by_image.end())
      for (std::size_t g : it->second) {
        if (!ignored[g] && matched[g]) continue;
        const double o = iou(d->box, gts[g].box);
        if (o >= iou_thresh && o > best_iou) {
          best_iou = o;
          best = static_cast<std::ptrdiff_t>(g);
        }
      }
    if (best >= 0 && ignored[best]) continue;
    if (best >= 0) {
      matched[best] = 1;
      ++tp;
    } else {
      ++fp;
    }
    pr.precision.push_back(static_cast<double>(tp) / (tp + fp));
    pr.recall.push_back(pr.num_gt > 0 ? static_cast<double>(tp) / pr.num_gt : 0.0);
  }
  return pr;
}

}  // namespace

std::string to_string(SizeBucket b) {
  switch (b) {
    case SizeBucket::kSmall: return "small";
    case SizeBucket::kMedium: return "medium";
    case SizeBucket::kLarge: return "large";
    case SizeBucket::kUnassigned: return "unassigned";
  }
  return "?";
}

std::vector<SizeBucket> bucket_by_area(const std::vector<double>& areas) {
  const std::size_t n = areas.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return areas[a] < areas[b]; });
  const std::size_t lo = static_cast<std::size_t>(std::floor(0.25 * n));
  const std::size_t hi = static_cast<std::size_t>(std::floor(0.75 * n));
  std::vector<SizeBucket> out(n);
  for (std::size_t r = 0; r < n; ++r)
    out[order[r]] = r < lo ? SizeBucket::kSmall : (r < hi ? SizeBucket::kMedium : SizeBucket::kLarge);
  return out;
}

void assign_scale_buckets(std::vector<GroundTruth>& gts) {
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < gts.size(); ++i) by_class[gts[i].class_id].push_back(i);
  for (const auto& [cls, idx] : by_class) {
    std::vector<double> areas;
    for (std::size_t i : idx) areas.push_back(gts[i].box.area());
    const auto b = bucket_by_area(areas);
    for (std::size_t k = 0; k < idx.size(); ++k) gts[idx[k]].bucket = b[k];
  }
}

PrCurve pr_curve(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts, int class_id,
                 double iou_thresh, std::optional<SizeBucket> bucket) {
  if (!bucket) return pr_curve_masked(dets, gts, class_id, iou_thresh, nullptr);
  std::array<bool, 4> mask{};
  mask[static_cast<int>(*bucket)] = true;
  return pr_curve_masked(dets, gts, class_id, iou_thresh, &mask);
}

PrCurve pr_curve(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts, int class_id,
                 double iou_thresh, const BucketSet& active) {
  for (const auto& g : gts)
    if (g.class_id == class_id && g.bucket == SizeBucket::kUnassigned)
      throw StateError("pr_curve: bucket mask given but a ground truth has no bucket");
  const std::array<bool, 4> mask{active[0], active[1], active[2], false};
  return pr_curve_masked(dets, gts, class_id, iou_thresh, &mask);
}

double compute_ap(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts, int class_id,
                  const BucketSet& active, double iou_thresh, ApInterp interp) {
  return average_precision(pr_curve(dets, gts, class_id, iou_thresh, active), interp);
}



double interpolated_precision(const PrCurve& pr, double r) {
  double best = 0;
  for (std::size_t i = 0; i < pr.recall.size(); ++i)
    if (pr.recall[i] >= r) best = std::max(best, pr.precision[i]);
  return best;
}

double average_precision(const PrCurve& pr, ApInterp interp) {
  if (pr.num_gt == 0) return kNaN;
  if (interp == ApInterp::kElevenPoint) {
    double s = 0;
    for (int i = 0; i <= 10; ++i) s += interpolated_precision(pr, i / 10.0);
    return s / 11.0;
  }
  return recall_restricted_ap(pr, 0.0);
}

double recall_restricted_ap(const PrCurve& pr, double recall_floor) {
  if (pr.num_gt == 0) return kNaN;
  if (!(recall_floor >= 0 && recall_floor < 1)) throw ConfigError("recall floor must lie in [0,1)");
  const std::vector<double> env = envelope(pr);
  double area = 0, prev = 0;
  for (std::size_t i = 0; i < pr.recall.size(); ++i) {
    const double r = pr.recall[i];
    if (r > prev) {
      const double lo = std::max(prev, recall_floor);
      if (r > lo) area += (r - lo) * env[i];
      prev = r;
    }
  }
  return area / (1.0 - recall_floor);
}

double compute_ap(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts, int class_id,
                  double iou_thresh, ApInterp interp, std::optional<SizeBucket> bucket) {
  return average_precision(pr_curve(dets, gts, class_id, iou_thresh, bucket), interp);
}

double map_at_recall(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts, double recall_floor,
                     double iou_thresh) {
  std::map<int, int> classes;
  for (const auto& g : gts) classes[g.class_id]++;
  std::vector<double> v;
  for (const auto& [cls, n] : classes) v.push_back(recall_restricted_ap(pr_curve(dets, gts, cls, iou_thresh), recall_floor));
  return mean_of_finite(v);
}

EvalReport evaluate(const std::vector<Detection>& dets, std::vector<GroundTruth> gts, const EvalOptions& opt) {
  if (opt.buckets) assign_scale_buckets(gts);
  std::map<int, int> counts;
  for (const auto& g : gts) counts[g.class_id]++;

  EvalReport r;
  r.bucketed = opt.buckets;
  r.recall_grid = opt.recall_grid;
  r.recall_floor = opt.recall_floor;
  std::vector<double> aps, floors;
  std::array<std::vector<double>, 3> bucket_aps;
  std::vector<std::vector<double>> grid(opt.recall_grid.size());
  for (const auto& [cls, n] : counts) {
    ClassReport c;
    c.class_id = cls;
    c.num_gt = n;
    const PrCurve pr = pr_curve(dets, gts, cls, opt.iou_threshold);
    c.ap = average_precision(pr, opt.interp);
    c.ap_above_floor = recall_restricted_ap(pr, opt.recall_floor);
    for (std::size_t k = 0; k < opt.recall_grid.size(); ++k) {
      c.precision_at_recall.push_back(interpolated_precision(pr, opt.recall_grid[k]));
      grid[k].push_back(c.precision_at_recall.back());
    }
    for (int b = 0; b < 3; ++b) {
      c.bucket_ap[b] = opt.buckets ? compute_ap(dets, gts, cls, opt.iou_threshold, opt.interp, SizeBucket(b)) : kNaN;
      bucket_aps[b].push_back(c.bucket_ap[b]);
    }
    aps.push_back(c.ap);
    floors.push_back(c.ap_above_floor);
    r.classes.push_back(c);
  }
  r.map = aps.empty() ? 0.0 : mean_of_finite(aps);
  for (int b = 0; b < 3; ++b) r.bucket_map[b] = mean_of_finite(bucket_aps[b]);
  for (const auto& g : grid) r.precision_at_recall.push_back(g.empty() ? 0.0 : mean_of_finite(g));
  r.map_at_recall = floors.empty() ? 0.0 : mean_of_finite(floors);
  return r;
}

namespace {

std::string fmt(double v, const char* f = "%.4f") {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

std::string format_report_text(const EvalReport& r) {
  std::ostringstream os;
  os << (r.bucketed ? "class   num_gt      AP   small  medium   large\n" : "class   num_gt      AP\n");
  auto row = [&](const std::string& name, const std::string& n, double ap, const std::array<double, 3>& b) {
    char buf[128];
    if (r.bucketed)
      std::snprintf(buf, sizeof buf, "%-6s %7s %7s %7s %7s %7s\n", name.c_str(), n.c_str(), fmt(ap).c_str(),
                    fmt(b[0]).c_str(), fmt(b[1]).c_str(), fmt(b[2]).c_str());
    else
      std::snprintf(buf, sizeof buf, "%-6s %7s %7s\n", name.c_str(), n.c_str(), fmt(ap).c_str());
    os << buf;
  };
  for (const auto& c : r.classes) row(std::to_string(c.class_id), std::to_string(c.num_gt), c.ap, c.bucket_ap);
  row("mean", "", r.map, r.bucket_map);
  os << "\nprecision at recall\n";
  for (std::size_t k = 0; k < r.recall_grid.size(); ++k)
    os << "  r>=" << fmt(r.recall_grid[k], "%.1f") << "  " << fmt(r.precision_at_recall[k]) << '\n';
  os << "mAP over recall >= " << fmt(r.recall_floor, "%.1f") << ": " << fmt(r.map_at_recall) << '\n';
  return os.str();
}

std::string format_report_csv(const EvalReport& r) {
  std::ostringstream os;
  os << "class,num_gt,ap,ap_small,ap_medium,ap_large";
  for (double g : r.recall_grid) os << ",p_at_r" << fmt(g, "%.1f");
  os << ",ap_recall_ge_" << fmt(r.recall_floor, "%.1f") << '\n';
  auto row = [&](const std::string& name, int n, double ap, const std::array<double, 3>& b,
                 const std::vector<double>& p, double fl) {
    os << name << ',' << n << ',' << fmt(ap, "%.6f");
    for (double v : b) os << ',' << fmt(v, "%.6f");
    for (double v : p) os << ',' << fmt(v, "%.6f");
    os << ',' << fmt(fl, "%.6f") << '\n';
  };
  int total = 0;
  for (const auto& c : r.classes) {
    row(std::to_string(c.class_id), c.num_gt, c.ap, c.bucket_ap, c.precision_at_recall, c.ap_above_floor);
    total += c.num_gt;
  }
  row("mean", total, r.map, r.bucket_map, r.precision_at_recall, r.map_at_recall);
  return os.str();
}

void write_ground_truth(std::ostream& os, const std::vector<GroundTruth>& gts) {
  // Shortest round-trip formatting keeps write -> read lossless.
  char buf[32];
  const auto put = [&](double v) {
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    os << ',' << std::string_view(buf, r.ptr - buf);
  };
  for (const auto& g : gts) {
    os << g.image_id << ',' << g.class_id;
    put(g.box.x_min);
    put(g.box.y_min);
    put(g.box.x_max);
    put(g.box.y_max);
    os << '\n';
  }
}

std::vector<GroundTruth> read_ground_truth(std::istream& is) {
  std::vector<GroundTruth> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const std::string where = "ground truth line " + std::to_string(lineno) + ": ";
    for (char& ch : line)
      if (ch == ',') ch = ' ';
    std::istringstream ss(line);
    GroundTruth g;
    if (!(ss >> g.image_id >> g.class_id >> g.box.x_min >> g.box.y_min >> g.box.x_max >> g.box.y_max))
      throw ParseError(where + "expected 6 comma-separated fields");
    std::string rest;
    if (ss >> rest) throw ParseError(where + "trailing data");
    if (!(g.box.area() > 0)) throw ParseError(where + "box has non-positive area");
    out.push_back(g);
  }
  return out;
}

}  // namespace stairnet
