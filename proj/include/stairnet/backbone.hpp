#pragma once
// Fully-convolutional stand-in backbone producing a five-level pyramid.
//
// Level 0 is reached through a stem (3x3 conv, 2x2 max pool, then 3x3 stride-2
// convs); each later level is computed from the previous one by a 3x3
// subsampling conv whose stride/pad are solved so the grid equals
// ceil(input_size / stride). Every conv is followed by batchnorm and relu.

#include <array>
#include <cstdint>
#include <vector>

#include "stairnet/autograd.hpp"

namespace stairnet {

inline constexpr int kNumLevels = 5;

struct BackboneConfig {
  int input_size = 64;
  int in_channels = 3;
  std::array<int, kNumLevels> level_strides{4, 8, 16, 32, 64};
  std::array<int, kNumLevels> level_channels{32, 64, 64, 64, 64};
  int blocks_per_level = 1;

  /// ceil(input_size / stride) per level.
  std::array<int, kNumLevels> grid_sizes() const;
  /// Throws ConfigError for an unusable stride ladder.
  void validate() const;

  /// Strides {8,16,32,64,100} at input 300.
  static BackboneConfig faithful();
};

/// Ordered finest-first feature maps with their strides.
struct PyramidFeatures {
  std::vector<Var> levels;
  std::vector<int> strides;
};

struct ConvBnBlock {
  ConvParams conv;
  BatchNormState bn;
};

struct BackboneLevel {
  /// Stem blocks for level 0, the single subsampling conv otherwise.
  std::vector<ConvBnBlock> entry;
  bool entry_pool = false;  // 2x2 max pool after the first stem block
  std::vector<ConvBnBlock> blocks;
};

struct BackboneParams {
  std::array<BackboneLevel, kNumLevels> levels;
};

/// Registers parameters under "backbone.level<i>." in `store`, one group per level.
template <typename T>
BackboneParams build_backbone(ParamStore<T>& store, const BackboneConfig& cfg, ParamInit& init);

/// images: n x in_channels x input_size x input_size.
template <typename T>
PyramidFeatures forward_pyramid(Tape<T>& tape, Var images, const BackboneConfig& cfg, const BackboneParams& params);

/// (stride, pad) of a 3x3 conv mapping grid `from` to grid `to`; ConfigError if none fits.
std::array<int, 2> solve_subsample(int from, int to);

}  // namespace stairnet
