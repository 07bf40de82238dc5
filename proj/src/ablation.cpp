#include "stairnet/ablation.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "stairnet/errors.hpp"

namespace stairnet {

namespace {

constexpr const char* kVariantPrefix = "variant.";

std::string join_ratios(const std::vector<double>& ars) {
  std::ostringstream ss;
  for (std::size_t i = 0; i < ars.size(); ++i) ss << (i ? "/" : "") << ars[i];
  return ss.str();
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::vector<std::string> row_fields(const AblationRow& r) {
  const ModelConfig& m = r.config.model;
  const bool on = m.combine.enabled;
  std::vector<std::string> f{r.name,
                             join_ratios(m.boxes.aspect_ratios),
                             on ? to_string(m.combine.upsample) : "-",
                             on ? to_string(m.combine.refine) : "-",
                             to_string(m.head.mode),
                             on ? to_string(m.combine.mode) : "-",
                             r.diverged ? "diverged" : "converged",
                             std::to_string(r.iterations)};
  if (r.diverged) {
    f.insert(f.end(), 4, "diverged");
  } else {
    f.push_back(fixed4(r.report.map));
    for (double b : r.report.bucket_map) f.push_back(fixed4(b));
  }
  return f;
}

const std::vector<std::string> kColumns{"name", "aspect_ratios", "upsample", "refine", "head", "combine",
                                          "status", "iters", "map", "small", "medium", "large"};

bool grid_bool(const ConfigLine& l) {
  if (l.value == "true" || l.value == "1") return true;
  if (l.value == "false" || l.value == "0") return false;
  throw ConfigError("grid line " + std::to_string(l.line) + ": " + l.key + ": expected true or false");
}

}  // namespace

ExperimentConfig AblationGrid::config_for(const AblationVariant& v) const {
  ExperimentConfig cfg = base;
  try {
    for (const auto& [key, value] : v.settings) apply_setting(cfg, key, value);
    cfg.finalize();
  } catch (const ConfigError& e) {
    throw ConfigError("variant '" + v.name + "': " + e.what());
  }
  return cfg;
}

std::vector<AblationVariant> combine_op_variants() {
  std::vector<AblationVariant> out;
  for (const char* op : {"sum", "max", "product"})
    for (const char* ref : {"conv3x3", "none"})
      out.push_back({std::string(op) + "_" + ref, {{"combine.mode", op}, {"combine.refine", ref}}});
  return out;
}

std::vector<AblationVariant> component_variants() {
  return {
      {"lateral_only", {{"combine.upsample", "none"}, {"combine.refine", "none"}}},
      {"no_refine", {{"combine.refine", "none"}}},
      {"aspect_1.6", {{"boxes.aspect_ratios", "1.6,2,3"}}},
      {"bilinear", {{"combine.upsample", "bilinear"}}},
      {"resblock", {{"combine.refine", "resblock"}}},
      {"multi_head", {{"head.mode", "multi"}}},
      {"stairnet", {}},
  };
}

AblationGrid parse_grid(std::istream& is, ExperimentConfig base) {
  AblationGrid grid;
  const auto lines = read_config_lines(is);
  const auto fail = [](const ConfigLine& l, const std::string& msg) {
    return ConfigError("grid line " + std::to_string(l.line) + ": " + msg);
  };
  // The preset comes first regardless of where it appears so variant lines can extend it.
  for (const auto& l : lines) {
    if (l.key != "ablation.preset") continue;
    if (l.value == "combine_ops") grid.variants = combine_op_variants();
    else if (l.value == "components") grid.variants = component_variants();
    else if (l.value == "none") grid.variants.clear();
    else throw fail(l, "unknown ablation.preset '" + l.value + "' (combine_ops|components|none)");
  }
  for (const auto& l : lines) {
    if (l.key == "ablation.preset") continue;
    if (l.key == "ablation.baseline") {
      grid.include_baseline = grid_bool(l);
    } else if (l.key.rfind(kVariantPrefix, 0) == 0) {
      const std::string rest = l.key.substr(std::char_traits<char>::length(kVariantPrefix));
      const auto dot = rest.find('.');
      if (dot == 0 || dot == std::string::npos || dot + 1 == rest.size())
        throw fail(l, "expected variant.NAME.KEY, got '" + l.key + "'");
      const std::string name = rest.substr(0, dot);
      auto it = std::find_if(grid.variants.begin(), grid.variants.end(),
                             [&](const AblationVariant& v) { return v.name == name; });
      if (it == grid.variants.end()) it = grid.variants.insert(grid.variants.end(), {name, {}});
      it->settings.emplace_back(rest.substr(dot + 1), l.value);
    } else {
      try {
        apply_setting(base, l.key, l.value);
      } catch (const ConfigError& e) {
        throw fail(l, e.what());
      }
    }
  }
  base.finalize();
  grid.base = base;
  // Surface bad variant keys now rather than mid-run.
  for (const auto& v : grid.variants) grid.config_for(v);
  return grid;
}

AblationGrid load_grid(const std::string& path, ExperimentConfig base) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open grid: " + path);
  try {
    return parse_grid(f, std::move(base));
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string AblationTable::to_csv() const {
  std::ostringstream ss;
  for (std::size_t i = 0; i < kColumns.size(); ++i) ss << (i ? "," : "") << kColumns[i];
  ss << '\n';
  for (const auto& r : rows) {
    const auto f = row_fields(r);
    for (std::size_t i = 0; i < f.size(); ++i) ss << (i ? "," : "") << f[i];
    ss << '\n';
  }
  return ss.str();
}

std::string AblationTable::to_text() const {
  std::vector<std::vector<std::string>> cells{kColumns};
  for (const auto& r : rows) cells.push_back(row_fields(r));
  std::vector<std::size_t> width(kColumns.size(), 0);
  for (const auto& c : cells)
    for (std::size_t i = 0; i < c.size(); ++i) width[i] = std::max(width[i], c[i].size());
  std::ostringstream ss;
  for (const auto& c : cells) {
    for (std::size_t i = 0; i < c.size(); ++i) {
      ss << (i ? "  " : "") << c[i];
      if (i + 1 < c.size()) ss << std::string(width[i] - c[i].size(), ' ');
    }
    ss << '\n';
  }
  return ss.str();
}

AblationTable run_ablation(const AblationGrid& grid, const Dataset& train_data, const Dataset& test_data,
                           std::ostream* log) {
  std::vector<std::pair<std::string, ExperimentConfig>> runs;
  if (grid.include_baseline) {
    ExperimentConfig b = grid.base;
    b.model = b.model.baseline();
    b.finalize();
    runs.emplace_back("baseline", b);
  }
  for (const auto& v : grid.variants) runs.emplace_back(v.name, grid.config_for(v));

  AblationTable table;
  for (const auto& [name, cfg] : runs) {
    if (train_data.image_size != cfg.model.backbone.input_size || test_data.image_size != cfg.model.backbone.input_size)
      throw ConfigError("ablation '" + name + "': dataset image size does not match backbone.input_size");
    if (log) *log << "ablation run '" << name << "'\n";
    const TrainResult res = train(cfg, train_data);
    AblationRow row;
    row.name = name;
    row.config = cfg;
    row.diverged = res.diverged;
    row.divergence = res.divergence;
    row.iterations = static_cast<int>(res.loss_history.size());
    row.final_loss = res.loss_history.empty() ? 0 : res.loss_history.back();
    if (!res.diverged) {
      StairNet<float> net = model_from_checkpoint(res.checkpoint);
      row.report = evaluate_model(net, test_data);
    }
    if (log) {
      if (row.diverged) *log << "  diverged: " << row.divergence << '\n';
      else *log << "  mAP " << fixed4(row.report.map) << " small " << fixed4(row.report.bucket_map[0]) << '\n';
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace stairnet
