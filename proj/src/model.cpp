#include "stairnet/model.hpp"

#include <algorithm>
#include <functional>

#include "stairnet/errors.hpp"

namespace stairnet {

void ModelConfig::finalize() {
  backbone.validate();
  combine.validate();
  const auto g = backbone.grid_sizes();
  boxes.grids.assign(g.begin(), g.end());
  boxes.validate();
  head.boxes_per_cell = boxes.boxes_per_cell();
  head.validate();
  loss.validate();
  decode.validate();
  if (!(head_init_gain > 0)) throw ConfigError("head.init_gain must be positive");
  const auto ch = head_channels();
  if (head.mode == HeadMode::kUnified && std::adjacent_find(ch.begin(), ch.end(), std::not_equal_to<>()) != ch.end())
    throw ConfigError("head.mode = unified needs equal channels on every level; enable combine or use multi");
}

std::array<int, kNumLevels> ModelConfig::head_channels() const {
  if (!combine.enabled) return backbone.level_channels;
  std::array<int, kNumLevels> c;
  c.fill(combine.channels);
  return c;
}

ModelConfig ModelConfig::toy() {
  ModelConfig cfg;
  cfg.combine.channels = 64;
  cfg.head_init_gain = 0.1;
  cfg.finalize();
  return cfg;
}

ModelConfig ModelConfig::faithful() {
  ModelConfig cfg;
  cfg.backbone = BackboneConfig::faithful();
  cfg.finalize();
  return cfg;
}

ModelConfig ModelConfig::baseline() const {
  ModelConfig cfg = *this;
  cfg.combine.enabled = false;
  cfg.head.mode = HeadMode::kMulti;
  cfg.finalize();
  return cfg;
}

std::vector<GtBox> to_targets(const std::vector<GroundTruth>& objects) {
  std::vector<GtBox> out;
  out.reserve(objects.size());
  for (const auto& g : objects) out.push_back({g.box, g.class_id});
  return out;
}

template <typename T>
StairNet<T>::StairNet(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)), seed_(seed) {
  cfg_.finalize();
  ParamInit init(seed);
  backbone_ = build_backbone(store_, cfg_.backbone, init);
  if (cfg_.combine.enabled) combine_ = build_combine(store_, cfg_.combine, cfg_.backbone.level_channels, init);
  head_ = build_head(store_, cfg_.head, cfg_.head_channels(), init, cfg_.head_init_gain);
  anchors_ = generate_default_boxes(cfg_.boxes);
}

template <typename T>
PyramidFeatures StairNet<T>::features(Tape<T>& tape, Var images) const {
  PyramidFeatures pyr = forward_pyramid(tape, images, cfg_.backbone, backbone_);
  if (!cfg_.combine.enabled) return pyr;
  return topdown_combine(tape, pyr, cfg_.combine, combine_);
}

template <typename T>
HeadOutput StairNet<T>::forward(Tape<T>& tape, Var images) const {
  return predict(tape, features(tape, images), cfg_.head, head_);
}

template <typename T>
MultiboxLoss<T> StairNet<T>::loss(Tape<T>& tape, Var images, const std::vector<std::vector<GtBox>>& targets) const {
  const HeadOutput out = forward(tape, images);
  return multibox_loss(tape, out.loc, out.conf, anchors_, targets, cfg_.boxes.variances, cfg_.loss);
}

template <typename T>
std::vector<Detection> StairNet<T>::detect(const Tensor<T>& images, int first_image_id) {
  Tape<T> tape(&store_, /*training=*/false);
  const HeadOutput out = forward(tape, tape.input(images, false));
  return decode_batch(tape.value(out.loc), tape.value(out.conf), anchors_, cfg_.boxes.variances, cfg_.decode,
                      first_image_id);
}

template class StairNet<float>;
template class StairNet<double>;

}  // namespace stairnet
