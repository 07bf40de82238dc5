#pragma once
// Ablation harness: trains a list of configuration variants with one seed and
// one dataset and tabulates their held-out mAP per size bucket.

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "stairnet/trainer.hpp"

namespace stairnet {

struct AblationVariant {
  std::string name;
  /// Config keys applied on top of the grid's base config, in order.
  std::vector<std::pair<std::string, std::string>> settings;
};

struct AblationGrid {
  ExperimentConfig base;
  /// Adds a first row with the combining module off and per-level heads.
  bool include_baseline = true;
  std::vector<AblationVariant> variants;

  /// Finalized config of one variant; ConfigError names the variant.
  ExperimentConfig config_for(const AblationVariant& v) const;
};

/// Element-wise sum/max/product, each with and without the 3x3 refine conv.
std::vector<AblationVariant> combine_op_variants();
/// The component grid: lateral only, no refine, extra aspect ratio 1.6,
/// bilinear upsampling, ResBlock refine, per-level heads, and the full model.
std::vector<AblationVariant> component_variants();

/// Grid files hold "key = value" lines. Plain config keys set the base config,
/// `ablation.preset` is one of combine_ops, components or none,
/// `ablation.baseline` is a boolean, and `variant.NAME.KEY = value` adds a
/// setting to variant NAME (created in order of first appearance, after any
/// preset variant of the same name).
AblationGrid parse_grid(std::istream& is, ExperimentConfig base = {});
AblationGrid load_grid(const std::string& path, ExperimentConfig base = {});

struct AblationRow {
  std::string name;
  ExperimentConfig config;
  bool diverged = false;
  std::string divergence;
  int iterations = 0;
  double final_loss = 0;
  EvalReport report;
};

struct AblationTable {
  std::vector<AblationRow> rows;

  /// One line per row: the components (aspect ratios, upsample, refine, head,
  /// combine op; "-" where the module is off) then mAP and per-bucket mAP, or
  /// "diverged" in every metric column.
  std::string to_csv() const;
  std::string to_text() const;
};

/// Trains every row on `train_data` and evaluates on `test_data`. Divergent
/// runs become "diverged" rows; other errors propagate.
AblationTable run_ablation(const AblationGrid& grid, const Dataset& train_data, const Dataset& test_data,
                           std::ostream* log = nullptr);

}  // namespace stairnet
