#pragma once
// Top-down pathway over a backbone pyramid.
//
// Each level is first projected to a common width by a 1x1 lateral conv and
// batchnorm. Starting at the coarsest level, the merged map of level i+1 is
// upsampled (deconv or bilinear), normalized, and combined elementwise with
// the lateral map of level i. The merged map is optionally refined before
// prediction; the map passed further down is the unrefined merge.

#include <array>
#include <string>
#include <vector>

#include "stairnet/autograd.hpp"
#include "stairnet/backbone.hpp"

namespace stairnet {

/// kNone drops the top-down connection: each level keeps only its lateral map.
enum class UpsampleKind { kDeconv, kBilinear, kNone };
enum class RefineKind { kConv3x3, kResBlock, kNone };

struct CombineConfig {
  bool enabled = true;
  EltwiseMode mode = EltwiseMode::kSum;
  UpsampleKind upsample = UpsampleKind::kDeconv;
  RefineKind refine = RefineKind::kConv3x3;
  int channels = 256;

  void validate() const;
};

EltwiseMode parse_combine_mode(const std::string& s);
UpsampleKind parse_upsample(const std::string& s);
RefineKind parse_refine(const std::string& s);
std::string to_string(EltwiseMode m);
std::string to_string(UpsampleKind u);
std::string to_string(RefineKind r);

struct LateralParams {
  ConvParams conv;
  BatchNormState bn;
};

struct UpsampleParams {
  ConvParams deconv;  // unused for bilinear
  BatchNormState bn;
};

/// conv3x3: conv + bn + relu. resblock: relu(relu(1x1) + 1x1(relu(3x3(relu(1x1))))).
struct RefineParams {
  ConvParams conv;
  BatchNormState bn;
  ConvParams skip;
  ConvParams reduce;
  ConvParams spatial;
  ConvParams expand;
};

struct CombineParams {
  std::array<LateralParams, kNumLevels> lateral;
  /// up[i] carries level i+1 down to level i.
  std::array<UpsampleParams, kNumLevels - 1> up;
  std::array<RefineParams, kNumLevels> refine;
};

/// Registers parameters under "combine.".
template <typename T>
CombineParams build_combine(ParamStore<T>& store, const CombineConfig& cfg,
                            const std::array<int, kNumLevels>& in_channels, ParamInit& init);

template <typename T>
Var lateral_project(Tape<T>& tape, Var f, const LateralParams& p);

template <typename T>
Var refine(Tape<T>& tape, Var f, const RefineParams& p, RefineKind kind);

template <typename T>
PyramidFeatures topdown_combine(Tape<T>& tape, const PyramidFeatures& pyramid, const CombineConfig& cfg,
                                const CombineParams& params);

}  // namespace stairnet
