#pragma once
// The complete detector: backbone pyramid, optional top-down combining, the
// multibox head and its default boxes, loss and decoding.

#include <cstdint>
#include <vector>

#include "stairnet/anchors.hpp"
#include "stairnet/backbone.hpp"
#include "stairnet/detection.hpp"
#include "stairnet/feature_combine.hpp"
#include "stairnet/multibox_head.hpp"
#include "stairnet/multibox_loss.hpp"
#include "stairnet/voc_eval.hpp"

namespace stairnet {

struct ModelConfig {
  BackboneConfig backbone;
  CombineConfig combine;
  BoxSpec boxes;  // grids follow the backbone
  HeadConfig head;  // boxes_per_cell follows the box spec
  LossConfig loss;
  DecodeConfig decode;
  double head_init_gain = 1.0;

  /// Copies derived fields (box grids, boxes per cell) and validates everything.
  void finalize();
  /// Channels of the maps the head sees.
  std::array<int, kNumLevels> head_channels() const;

  /// 64x64 input, strides {4,...,64}, 64-channel combining, unified head
  /// initialized at gain 0.1.
  static ModelConfig toy();
  /// Input 300, strides {8,16,32,64,100}, 256-channel combining.
  static ModelConfig faithful();
  /// Same backbone and boxes with the combining module off and per-level heads.
  ModelConfig baseline() const;
};

std::vector<GtBox> to_targets(const std::vector<GroundTruth>& objects);

template <typename T>
class StairNet {
 public:
  /// Finalizes `cfg` and initializes all parameters from `seed`.
  StairNet(ModelConfig cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }
  ParamStore<T>& store() { return store_; }
  const ParamStore<T>& store() const { return store_; }
  const DefaultBoxSet& anchors() const { return anchors_; }

  /// Maps fed to the head (combined when the module is enabled).
  PyramidFeatures features(Tape<T>& tape, Var images) const;
  HeadOutput forward(Tape<T>& tape, Var images) const;
  MultiboxLoss<T> loss(Tape<T>& tape, Var images, const std::vector<std::vector<GtBox>>& targets) const;
  /// Inference-mode forward and decoding; image ids start at `first_image_id`.
  std::vector<Detection> detect(const Tensor<T>& images, int first_image_id = 0);

  /// Same architecture with values converted to U.
  template <typename U>
  StairNet<U> cast() const {
    StairNet<U> out(cfg_, seed_);
    for (int i = 0; i < store_.size(); ++i) out.store().value(i) = store_.value(i).template cast<U>();
    return out;
  }

 private:
  ModelConfig cfg_;
  std::uint64_t seed_;
  ParamStore<T> store_;
  BackboneParams backbone_;
  CombineParams combine_;
  HeadParams head_;
  DefaultBoxSet anchors_;
};

}  // namespace stairnet
