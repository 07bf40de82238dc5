#include "stairnet/backbone.hpp"

#include <algorithm>
#include <string>

#include "stairnet/errors.hpp"

namespace stairnet {

namespace {

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

int log2_exact(int v) {
  int s = 0;
  while ((1 << s) < v) ++s;
  return s;
}

int conv_out(int in, int stride, int pad) { return (in + 2 * pad - 3) / stride + 1; }

std::string level_prefix(int level) { return "backbone.level" + std::to_string(level) + "."; }

template <typename T>
ConvBnBlock add_block(ParamStore<T>& store, const std::string& name, int in_ch, int out_ch, int stride, int pad,
                      ParamInit& init) {
  ConvBnBlock b;
  b.conv = add_conv(store, name + ".conv", in_ch, out_ch, 3, stride, pad, init, /*bias=*/false);
  b.bn = add_batchnorm(store, name + ".bn", out_ch);
  return b;
}

template <typename T>
Var run_block(Tape<T>& tape, Var x, const ConvBnBlock& b) {
  return ops::relu(tape, ops::batchnorm(tape, ops::conv2d(tape, x, b.conv), b.bn));
}

}  // namespace

std::array<int, kNumLevels> BackboneConfig::grid_sizes() const {
  std::array<int, kNumLevels> g{};
  for (int i = 0; i < kNumLevels; ++i) g[i] = (input_size + level_strides[i] - 1) / level_strides[i];
  return g;
}

BackboneConfig BackboneConfig::faithful() {
  BackboneConfig cfg;
  cfg.input_size = 300;
  cfg.level_strides = {8, 16, 32, 64, 100};
  cfg.level_channels = {64, 128, 128, 64, 64};
  return cfg;
}

std::array<int, 2> solve_subsample(int from, int to) {
  static constexpr int kCandidates[][2] = {{2, 1}, {2, 0}, {3, 1}, {3, 0}, {1, 1}, {1, 0}};
  for (const auto& c : kCandidates) {
    if (from + 2 * c[1] < 3) continue;
    if (conv_out(from, c[0], c[1]) == to) return {c[0], c[1]};
  }
  throw ConfigError("no 3x3 conv maps grid " + std::to_string(from) + " to " + std::to_string(to));
}

void BackboneConfig::validate() const {
  if (input_size <= 0 || input_size % 2 != 0) throw ConfigError("backbone.input_size must be positive and even");
  if (in_channels <= 0) throw ConfigError("backbone.in_channels must be positive");
  if (blocks_per_level < 0) throw ConfigError("backbone.blocks_per_level must be non-negative");
  if (!is_power_of_two(level_strides[0]) || level_strides[0] < 2)
    throw ConfigError("backbone level 0 stride must be a power of two >= 2");
  for (int i = 0; i < kNumLevels; ++i) {
    if (level_channels[i] <= 0) throw ConfigError("backbone channels must be positive");
    if (i > 0 && level_strides[i] <= level_strides[i - 1])
      throw ConfigError("backbone strides must be strictly increasing");
  }
  const auto g = grid_sizes();
  for (int i = 1; i < kNumLevels; ++i) solve_subsample(g[i - 1], g[i]);
}

template <typename T>
BackboneParams build_backbone(ParamStore<T>& store, const BackboneConfig& cfg, ParamInit& init) {
  cfg.validate();
  BackboneParams p;
  const auto grids = cfg.grid_sizes();
  const int halvings = log2_exact(cfg.level_strides[0]);
  const int c0 = cfg.level_channels[0];
  const int stem_ch = halvings == 1 ? c0 : std::max(1, c0 / 2);

  BackboneLevel& l0 = p.levels[0];
  l0.entry.push_back(add_block(store, level_prefix(0) + "stem0", cfg.in_channels, stem_ch, 1, 1, init));
  l0.entry_pool = true;
  for (int s = 1; s < halvings; ++s) {
    const int out = s + 1 == halvings ? c0 : stem_ch;
    l0.entry.push_back(add_block(store, level_prefix(0) + "stem" + std::to_string(s), stem_ch, out, 2, 1, init));
  }

  for (int i = 0; i < kNumLevels; ++i) {
    BackboneLevel& lv = p.levels[i];
    const std::string pre = level_prefix(i);
    if (i > 0) {
      const auto sp = solve_subsample(grids[i - 1], grids[i]);
      lv.entry.push_back(
          add_block(store, pre + "down", cfg.level_channels[i - 1], cfg.level_channels[i], sp[0], sp[1], init));
    }
    for (int b = 0; b < cfg.blocks_per_level; ++b)
      lv.blocks.push_back(
          add_block(store, pre + "block" + std::to_string(b), cfg.level_channels[i], cfg.level_channels[i], 1, 1, init));
  }
  return p;
}

template <typename T>
PyramidFeatures forward_pyramid(Tape<T>& tape, Var images, const BackboneConfig& cfg, const BackboneParams& params) {
  const Shape4 s = tape.value(images).shape();
  if (s.c != cfg.in_channels || s.h != cfg.input_size || s.w != cfg.input_size)
    throw DimensionError("backbone input expected " + std::to_string(cfg.in_channels) + "x" +
                         std::to_string(cfg.input_size) + "x" + std::to_string(cfg.input_size) + ", got " + s.str());
  PyramidFeatures out;
  Var x = images;
  for (int i = 0; i < kNumLevels; ++i) {
    const BackboneLevel& lv = params.levels[i];
    for (std::size_t e = 0; e < lv.entry.size(); ++e) {
      x = run_block(tape, x, lv.entry[e]);
      if (e == 0 && lv.entry_pool) x = ops::maxpool2d(tape, x, 2, 2);
    }
    for (const auto& b : lv.blocks) x = run_block(tape, x, b);
    out.levels.push_back(x);
    out.strides.push_back(cfg.level_strides[i]);
  }
  return out;
}

#define STAIRNET_INSTANTIATE(T)                                                                     \
  template BackboneParams build_backbone<T>(ParamStore<T>&, const BackboneConfig&, ParamInit&);      \
  template PyramidFeatures forward_pyramid<T>(Tape<T>&, Var, const BackboneConfig&, const BackboneParams&);

STAIRNET_INSTANTIATE(float)
STAIRNET_INSTANTIATE(double)
#undef STAIRNET_INSTANTIATE

}  // namespace stairnet
