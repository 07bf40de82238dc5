#include "stairnet/multibox_head.hpp"

#include "stairnet/errors.hpp"

namespace stairnet {

HeadMode parse_head_mode(const std::string& s) {
  if (s == "unified") return HeadMode::kUnified;
  if (s == "multi") return HeadMode::kMulti;
  throw ConfigError("unknown head mode '" + s + "' (unified|multi)");
}

std::string to_string(HeadMode m) { return m == HeadMode::kUnified ? "unified" : "multi"; }

void HeadConfig::validate() const {
  if (num_classes < 2) throw ConfigError("head.num_classes must be at least 2");
  if (boxes_per_cell < 1) throw ConfigError("boxes per cell must be at least 1");
}

template <typename T>
HeadParams build_head(ParamStore<T>& store, const HeadConfig& cfg, const std::array<int, kNumLevels>& level_channels,
                      ParamInit& init, double init_gain) {
  cfg.validate();
  HeadParams p;
  auto add = [&](const std::string& name, int in_ch) {
    ConvParams c = add_conv(store, name, in_ch, cfg.out_channels(), 3, 1, 1, init);
    if (init_gain != 1.0) {
      Tensor<T>& w = store.value(c.weight);
      for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<T>(w[i] * init_gain);
    }
    p.convs.push_back(c);
  };
  if (cfg.mode == HeadMode::kUnified) {
    for (int i = 1; i < kNumLevels; ++i)
      if (level_channels[i] != level_channels[0])
        throw ConfigError("unified head needs equal channel counts on every level (level " + std::to_string(i) +
                          " has " + std::to_string(level_channels[i]) + ", level 0 has " +
                          std::to_string(level_channels[0]) + ")");
    add("head.shared", level_channels[0]);
  } else {
    for (int i = 0; i < kNumLevels; ++i) add("head.level" + std::to_string(i), level_channels[i]);
  }
  return p;
}

namespace ops {

// Calls fn(level, src, dst) for every gathered element; src indexes the level
// map, dst the n x 1 x A x width output.
template <typename Fn>
void for_each_gathered(const std::vector<Shape4>& shapes, int k, int group_size, int start, int width, Fn&& fn) {
  int total = 0;
  for (const Shape4& s : shapes) total += s.h * s.w * k;
  int base = 0;
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    const Shape4& s = shapes[l];
    const int hw = s.h * s.w;
    for (int b = 0; b < s.n; ++b)
      for (int cell = 0; cell < hw; ++cell)
        for (int v = 0; v < k; ++v) {
          const std::size_t dst = (static_cast<std::size_t>(b) * total + base + cell * k + v) * width;
          for (int j = 0; j < width; ++j)
            fn(l, (static_cast<std::size_t>(b) * s.c + v * group_size + start + j) * hw + cell, dst + j);
        }
    base += hw * k;
  }
}

template <typename T>
Var gather_anchors(Tape<T>& tape, const std::vector<Var>& levels, int k, int group_size, int start, int width) {
  if (levels.empty()) throw DimensionError("gather_anchors: no levels");
  std::vector<Shape4> shapes;
  int total = 0;
  for (Var v : levels) {
    const Shape4 s = tape.value(v).shape();
    if (s.n != tape.value(levels[0]).n()) throw DimensionError("gather_anchors: batch size differs across levels");
    if (s.c != k * group_size)
      throw DimensionError("gather_anchors: level has " + std::to_string(s.c) + " channels, expected " +
                           std::to_string(k * group_size));
    shapes.push_back(s);
    total += s.h * s.w * k;
  }
  Tensor<T> out({shapes[0].n, 1, total, width});
  for_each_gathered(shapes, k, group_size, start, width,
                    [&](std::size_t l, std::size_t src, std::size_t dst) { out[dst] = tape.value(levels[l])[src]; });

  return tape.record("gather_anchors", std::move(out), levels,
                     [levels, shapes, k, group_size, start, width](Tape<T>& t, const Tensor<T>& g) {
                       std::vector<Tensor<T>> grads;
                       for (const Shape4& s : shapes) grads.emplace_back(s);
                       for_each_gathered(shapes, k, group_size, start, width,
                                         [&](std::size_t l, std::size_t src, std::size_t dst) { grads[l][src] += g[dst]; });
                       for (std::size_t l = 0; l < levels.size(); ++l)
                         if (t.needs_grad(levels[l])) t.accumulate(levels[l], grads[l]);
                     });
}

}  // namespace ops

template <typename T>
HeadOutput predict(Tape<T>& tape, const PyramidFeatures& features, const HeadConfig& cfg, const HeadParams& params) {
  if (features.levels.size() != kNumLevels) throw DimensionError("head expects five feature levels");
  std::vector<Var> maps;
  for (int i = 0; i < kNumLevels; ++i) {
    const ConvParams& c = params.for_level(i);
    const int in_ch = tape.store().value(c.weight).c();
    if (tape.value(features.levels[i]).c() != in_ch)
      throw DimensionError("head level " + std::to_string(i) + " expects " + std::to_string(in_ch) + " channels");
    maps.push_back(ops::conv2d(tape, features.levels[i], c));
  }
  const int group = cfg.num_classes + 4;
  HeadOutput out;
  out.loc = ops::gather_anchors(tape, maps, cfg.boxes_per_cell, group, 0, 4);
  out.conf = ops::gather_anchors(tape, maps, cfg.boxes_per_cell, group, 4, cfg.num_classes);
  return out;
}

#define STAIRNET_INSTANTIATE(T)                                                                                 \
  template HeadParams build_head<T>(ParamStore<T>&, const HeadConfig&, const std::array<int, kNumLevels>&,      \
                                    ParamInit&, double);                                                        \
  template HeadOutput predict<T>(Tape<T>&, const PyramidFeatures&, const HeadConfig&, const HeadParams&);       \
  template Var ops::gather_anchors<T>(Tape<T>&, const std::vector<Var>&, int, int, int, int);

STAIRNET_INSTANTIATE(float)
STAIRNET_INSTANTIATE(double)
#undef STAIRNET_INSTANTIATE

}  // namespace stairnet
