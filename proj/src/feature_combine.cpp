#include "stairnet/feature_combine.hpp"

#include <algorithm>

#include "stairnet/errors.hpp"

namespace stairnet {

namespace {

std::string level_name(const char* what, int level) { return std::string("combine.") + what + std::to_string(level); }

}  // namespace

void CombineConfig::validate() const {
  if (enabled && channels <= 0) throw ConfigError("combine.channels must be positive");
}

EltwiseMode parse_combine_mode(const std::string& s) {
  if (s == "sum") return EltwiseMode::kSum;
  if (s == "max") return EltwiseMode::kMax;
  if (s == "product") return EltwiseMode::kProduct;
  throw ConfigError("unknown combine mode '" + s + "' (sum|max|product)");
}

UpsampleKind parse_upsample(const std::string& s) {
  if (s == "deconv") return UpsampleKind::kDeconv;
  if (s == "bilinear") return UpsampleKind::kBilinear;
  if (s == "none") return UpsampleKind::kNone;
  throw ConfigError("unknown upsample '" + s + "' (deconv|bilinear|none)");
}

RefineKind parse_refine(const std::string& s) {
  if (s == "conv3x3") return RefineKind::kConv3x3;
  if (s == "resblock") return RefineKind::kResBlock;
  if (s == "none") return RefineKind::kNone;
  throw ConfigError("unknown refine '" + s + "' (conv3x3|resblock|none)");
}

std::string to_string(EltwiseMode m) {
  switch (m) {
    case EltwiseMode::kSum: return "sum";
    case EltwiseMode::kMax: return "max";
    case EltwiseMode::kProduct: return "product";
  }
  return "?";
}

std::string to_string(UpsampleKind u) {
  switch (u) {
    case UpsampleKind::kDeconv: return "deconv";
    case UpsampleKind::kBilinear: return "bilinear";
    case UpsampleKind::kNone: return "none";
  }
  return "?";
}

std::string to_string(RefineKind r) {
  switch (r) {
    case RefineKind::kConv3x3: return "conv3x3";
    case RefineKind::kResBlock: return "resblock";
    case RefineKind::kNone: return "none";
  }
  return "?";
}

template <typename T>
CombineParams build_combine(ParamStore<T>& store, const CombineConfig& cfg,
                            const std::array<int, kNumLevels>& in_channels, ParamInit& init) {
  cfg.validate();
  const int c = cfg.channels;
  CombineParams p;
  for (int i = 0; i < kNumLevels; ++i) {
    const std::string lat = level_name("lateral", i);
    p.lateral[i].conv = add_conv(store, lat + ".conv", in_channels[i], c, 1, 1, 0, init, false);
    p.lateral[i].bn = add_batchnorm(store, lat + ".bn", c);
  }
  for (int i = 0; i + 1 < kNumLevels && cfg.upsample != UpsampleKind::kNone; ++i) {
    const std::string up = level_name("up", i);
    if (cfg.upsample == UpsampleKind::kDeconv) p.up[i].deconv = add_deconv(store, up + ".deconv", c, c, 2, 2, 0, init, false);
    p.up[i].bn = add_batchnorm(store, up + ".bn", c);
  }
  for (int i = 0; i < kNumLevels; ++i) {
    const std::string ref = level_name("refine", i);
    RefineParams& r = p.refine[i];
    if (cfg.refine == RefineKind::kConv3x3) {
      r.conv = add_conv(store, ref + ".conv", c, c, 3, 1, 1, init, false);
      r.bn = add_batchnorm(store, ref + ".bn", c);
    } else if (cfg.refine == RefineKind::kResBlock) {
      const int mid = std::max(1, c / 2);
      r.skip = add_conv(store, ref + ".skip", c, c, 1, 1, 0, init);
      r.reduce = add_conv(store, ref + ".reduce", c, mid, 1, 1, 0, init);
      r.spatial = add_conv(store, ref + ".spatial", mid, mid, 3, 1, 1, init);
      r.expand = add_conv(store, ref + ".expand", mid, c, 1, 1, 0, init);
    }
  }
  return p;
}

template <typename T>
Var lateral_project(Tape<T>& tape, Var f, const LateralParams& p) {
  return ops::batchnorm(tape, ops::conv2d(tape, f, p.conv), p.bn);
}

template <typename T>
Var refine(Tape<T>& tape, Var f, const RefineParams& p, RefineKind kind) {
  switch (kind) {
    case RefineKind::kNone:
      return f;
    case RefineKind::kConv3x3:
      return ops::relu(tape, ops::batchnorm(tape, ops::conv2d(tape, f, p.conv), p.bn));
    case RefineKind::kResBlock: {
      Var a = ops::relu(tape, ops::conv2d(tape, f, p.skip));
      Var b = ops::relu(tape, ops::conv2d(tape, f, p.reduce));
      b = ops::relu(tape, ops::conv2d(tape, b, p.spatial));
      b = ops::conv2d(tape, b, p.expand);
      return ops::relu(tape, ops::eltwise(tape, a, b, EltwiseMode::kSum));
    }
  }
  throw ConfigError("unknown refine kind");
}

template <typename T>
PyramidFeatures topdown_combine(Tape<T>& tape, const PyramidFeatures& pyramid, const CombineConfig& cfg,
                                const CombineParams& params) {
  if (pyramid.levels.size() != kNumLevels) throw DimensionError("topdown_combine expects five pyramid levels");
  PyramidFeatures out;
  out.strides = pyramid.strides;
  out.levels.resize(kNumLevels);
  Var carry;
  for (int i = kNumLevels - 1; i >= 0; --i) {
    Var merged = lateral_project(tape, pyramid.levels[i], params.lateral[i]);
    if (carry.valid() && cfg.upsample != UpsampleKind::kNone) {
      const Shape4 target = tape.value(merged).shape();
      Var up = cfg.upsample == UpsampleKind::kDeconv
                   ? ops::deconv2d(tape, carry, params.up[i].deconv, target.h, target.w)
                   : ops::bilinear_upsample(tape, carry, target.h, target.w);
      up = ops::batchnorm(tape, up, params.up[i].bn);
      merged = ops::eltwise(tape, merged, up, cfg.mode);
    }
    out.levels[i] = refine(tape, merged, params.refine[i], cfg.refine);
    carry = merged;
  }
  return out;
}

#define STAIRNET_INSTANTIATE(T)                                                                                 \
  template CombineParams build_combine<T>(ParamStore<T>&, const CombineConfig&,                                 \
                                          const std::array<int, kNumLevels>&, ParamInit&);                      \
  template Var lateral_project<T>(Tape<T>&, Var, const LateralParams&);                                         \
  template Var refine<T>(Tape<T>&, Var, const RefineParams&, RefineKind);                                       \
  template PyramidFeatures topdown_combine<T>(Tape<T>&, const PyramidFeatures&, const CombineConfig&,           \
                                              const CombineParams&);

STAIRNET_INSTANTIATE(float)
STAIRNET_INSTANTIATE(double)
#undef STAIRNET_INSTANTIATE

}  // namespace stairnet
