#pragma once
// Flat key=value experiment configuration. Keys are grouped by prefix:
// backbone.*, combine.*, boxes.*, head.*, loss.*, decode.*, train.*, data.*.
// Unknown keys are a ConfigError.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "stairnet/model.hpp"
#include "stairnet/synth_data.hpp"

namespace stairnet {

struct TrainConfig {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int batch_size = 16;
  int total_iters = 6000;
  std::vector<int> lr_decay_iters{3000, 4500};
  double decay_factor = 0.1;
  std::uint64_t seed = 1;
  int log_every = 50;
  /// Held-out evaluation and last-good snapshot interval; 0 evaluates only at the end.
  int eval_every = 1000;
  int train_scenes = 20000;
  int test_scenes = 500;

  void validate() const;
  /// lr 1e-3 for 120k iterations, decays at 80k and 100k, batch 16.
  static TrainConfig faithful();
};

struct ExperimentConfig {
  ModelConfig model = ModelConfig::toy();
  TrainConfig train;
  SceneSpec data;

  /// Cross-checks (data.image_size equals backbone.input_size, anchors and head
  /// agree) and finalizes the model config.
  void finalize();
};

/// Applies one key; throws ConfigError naming the key for unknown keys or bad values.
void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value);
struct ConfigLine {
  int line = 0;
  std::string key, value;
};

/// Non-empty "key = value" lines with '#' comments stripped and both sides trimmed.
std::vector<ConfigLine> read_config_lines(std::istream& is);

/// Parses "key = value" lines ('#' starts a comment) on top of `base`.
ExperimentConfig parse_config(std::istream& is, ExperimentConfig base = {});
ExperimentConfig parse_config_text(const std::string& text, ExperimentConfig base = {});
ExperimentConfig load_config(const std::string& path, ExperimentConfig base = {});
/// Every key with its current value, one per line in a fixed order. Parsing
/// the result reproduces the config.
std::string to_text(const ExperimentConfig& cfg);
std::vector<std::string> config_keys();

}  // namespace stairnet
