#pragma once
// Per-level 3x3 prediction conv with (c+4)*k outputs, flattened to anchor order.
//
// Output channel v*(c+4)+j of a level holds, for box variant v, the four box
// offsets (j < 4) followed by c class logits.

#include <array>
#include <string>
#include <vector>

#include "stairnet/autograd.hpp"
#include "stairnet/backbone.hpp"

namespace stairnet {

enum class HeadMode { kUnified, kMulti };

HeadMode parse_head_mode(const std::string& s);
std::string to_string(HeadMode m);

struct HeadConfig {
  int num_classes = 5;  // including background
  int boxes_per_cell = 6;
  HeadMode mode = HeadMode::kUnified;

  void validate() const;
  int out_channels() const { return (num_classes + 4) * boxes_per_cell; }
};

struct HeadParams {
  /// One conv in unified mode, five in multi mode.
  std::vector<ConvParams> convs;
  const ConvParams& for_level(int level) const { return convs.size() == 1 ? convs[0] : convs.at(level); }
};

/// loc: n x 1 x A x 4, conf: n x 1 x A x c (raw logits).
struct HeadOutput {
  Var loc;
  Var conf;
};

/// Throws ConfigError for unified mode over levels of different widths.
template <typename T>
HeadParams build_head(ParamStore<T>& store, const HeadConfig& cfg, const std::array<int, kNumLevels>& level_channels,
                      ParamInit& init, double init_gain = 1.0);

template <typename T>
HeadOutput predict(Tape<T>& tape, const PyramidFeatures& features, const HeadConfig& cfg, const HeadParams& params);

namespace ops {

/// Moves channels [start, start+width) of each variant group (stride group_size)
/// out of every level map into an n x 1 x A x width tensor in anchor order.
template <typename T>
Var gather_anchors(Tape<T>& tape, const std::vector<Var>& levels, int boxes_per_cell, int group_size, int start,
                   int width);

}  // namespace ops

}  // namespace stairnet
