// Command-line front end: train, eval, ablate, gradcheck, detect, gen-data, print-config.

#include <CLI11.hpp>

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "stairnet/ablation.hpp"
#include "stairnet/errors.hpp"
#include "stairnet/gradient_suite.hpp"
#include "stairnet/trainer.hpp"

namespace fs = std::filesystem;
using namespace stairnet;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitDiverged = 3;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
}

ExperimentConfig config_or_default(const std::string& path) {
  ExperimentConfig c = path.empty() ? ExperimentConfig{} : load_config(path);
  c.finalize();
  return c;
}

struct TrainArgs {
  std::string config, out, resume, train_data, test_data;
};

int cmd_train(const TrainArgs& a) {
  const ExperimentConfig cfg = config_or_default(a.config);
  fs::create_directories(a.out);
  const Dataset train_set = a.train_data.empty() ? generate_dataset(cfg.data, 0, cfg.train.train_scenes)
                                                 : read_dataset(a.train_data);
  const Dataset test_set = a.test_data.empty()
                               ? generate_dataset(cfg.data, cfg.train.train_scenes, cfg.train.test_scenes)
                               : read_dataset(a.test_data);
  write_text(fs::path(a.out) / "config.txt", to_text(cfg));

  std::ofstream metrics(fs::path(a.out) / "metrics.csv", a.resume.empty() ? std::ios::trunc : std::ios::app);
  if (!metrics) throw IoError("cannot write " + (fs::path(a.out) / "metrics.csv").string());
  Checkpoint resume;
  TrainOptions opt;
  opt.eval_data = &test_set;
  opt.metrics = &metrics;
  opt.log = &std::cout;
  if (!a.resume.empty()) {
    resume = load_checkpoint(a.resume);
    opt.resume = &resume;
  }
  const TrainResult res = train(cfg, train_set, opt);
  save_checkpoint(res.checkpoint, fs::path(a.out) / "checkpoint.bin");
  if (!res.evals.empty()) {
    write_text(fs::path(a.out) / "eval.txt", format_report_text(res.evals.back().report));
    write_text(fs::path(a.out) / "eval.csv", format_report_csv(res.evals.back().report));
  }
  if (res.diverged) {
    std::cerr << "training diverged: " << res.divergence << "\nlast good checkpoint (iteration "
              << res.checkpoint.iteration << ") written to " << (fs::path(a.out) / "checkpoint.bin").string() << '\n';
    return kExitDiverged;
  }
  if (!res.evals.empty()) std::cout << format_report_text(res.evals.back().report);
  return 0;
}

struct EvalArgs {
  std::string checkpoint, data, csv;
  bool buckets = false;
  double recall_floor = 0.7;
};

int cmd_eval(const EvalArgs& a) {
  StairNet<float> net = model_from_checkpoint(load_checkpoint(a.checkpoint));
  const Dataset data = read_dataset(a.data);
  if (data.image_size != net.config().backbone.input_size)
    throw ConfigError("dataset image size " + std::to_string(data.image_size) + " does not match the model input " +
                      std::to_string(net.config().backbone.input_size));
  EvalOptions opt;
  opt.buckets = a.buckets;
  opt.recall_floor = a.recall_floor;
  const EvalReport r = evaluate_model(net, data, opt);
  std::cout << format_report_text(r);
  if (!a.csv.empty()) write_text(a.csv, format_report_csv(r));
  return 0;
}

int cmd_ablate(const std::string& grid_path, const std::string& out) {
  const AblationGrid grid = load_grid(grid_path);
  const ExperimentConfig& b = grid.base;
  const Dataset train_set = generate_dataset(b.data, 0, b.train.train_scenes);
  const Dataset test_set = generate_dataset(b.data, b.train.train_scenes, b.train.test_scenes);
  const AblationTable table = run_ablation(grid, train_set, test_set, &std::cout);
  fs::create_directories(out);
  write_text(fs::path(out) / "ablation.csv", table.to_csv());
  write_text(fs::path(out) / "ablation.txt", table.to_text());
  std::cout << table.to_text();
  return 0;
}

int cmd_gradcheck(const std::string& op, bool full_model) {
  std::vector<GradCase> cases;
  if (!op.empty()) {
    cases.push_back(run_gradient_case(op));
  } else if (full_model) {
    cases.push_back(run_gradient_case("full_model"));
  } else {
    cases = run_gradient_suite(false);
  }
  bool ok = true;
  for (const auto& c : cases) {
    std::printf("%-18s max_rel_err %.3e  tol %.0e  %s\n", c.name.c_str(), c.max_rel_error, c.tolerance,
                c.passed() ? "PASS" : "FAIL");
    ok = ok && c.passed();
  }
  return ok ? 0 : kExitFailure;
}

constexpr std::array<std::array<std::uint8_t, 3>, kNumShapeClasses> kClassColors{{
    {230, 40, 40}, {40, 200, 60}, {50, 90, 240}, {240, 210, 30}}};

void draw_rect(std::vector<std::uint8_t>& rgb, int size, const BoxXYXY& b, const std::array<std::uint8_t, 3>& color) {
  const auto px = [&](double v) { return std::clamp(static_cast<int>(v * size), 0, size - 1); };
  const int x0 = px(b.x_min), x1 = px(b.x_max), y0 = px(b.y_min), y1 = px(b.y_max);
  const auto put = [&](int x, int y) { std::copy(color.begin(), color.end(), rgb.begin() + 3 * (y * size + x)); };
  for (int x = x0; x <= x1; ++x) put(x, y0), put(x, y1);
  for (int y = y0; y <= y1; ++y) put(x0, y), put(x1, y);
}

int cmd_detect(const std::string& checkpoint, const std::string& image, const std::string& out, double min_score) {
  StairNet<float> net = model_from_checkpoint(load_checkpoint(checkpoint));
  const int size = net.config().backbone.input_size;
  Dataset one;
  int w = 0, h = 0;
  one.images.push_back(read_ppm(image, w, h));
  if (w != size || h != size)
    throw ConfigError("image is " + std::to_string(w) + "x" + std::to_string(h) + ", the model expects " +
                      std::to_string(size) + "x" + std::to_string(size));
  one.image_size = size;
  one.names.push_back(image);
  one.objects.emplace_back();
  const int idx[] = {0};
  auto dets = net.detect(one.batch(idx));
  std::vector<std::uint8_t> rgb = one.images[0];
  // Lowest scores first so the strongest boxes are drawn on top.
  std::sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) { return a.score < b.score; });
  for (const auto& d : dets) {
    if (d.score < min_score) continue;
    draw_rect(rgb, size, d.box, kClassColors[(d.class_id - 1) % kNumShapeClasses]);
    std::printf("%-8s %.3f  %.3f %.3f %.3f %.3f\n", shape_name(d.class_id),
                d.score, d.box.x_min, d.box.y_min, d.box.x_max, d.box.y_max);
  }
  write_ppm(out, size, size, rgb);
  return 0;
}

int cmd_gen_data(const std::string& spec_path, int first, int count, const std::string& out) {
  const ExperimentConfig cfg = config_or_default(spec_path);
  write_dataset(generate_dataset(cfg.data, first, count), out);
  std::cout << "wrote " << count << " scenes to " << out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"StairNet detector: training, evaluation and ablations on synthetic scenes"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write checkpoint.bin, metrics.csv and eval reports");
  train_cmd->add_option("--config", ta.config, "Config file (key = value); defaults to the toy config")
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--out", ta.out, "Output directory")->required();
  train_cmd->add_option("--resume", ta.resume, "Continue from a checkpoint written with the same config")
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--train-data", ta.train_data, "Dataset directory instead of generated scenes");
  train_cmd->add_option("--test-data", ta.test_data, "Held-out dataset directory instead of generated scenes");

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset directory");
  eval_cmd->add_option("--checkpoint", ea.checkpoint)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", ea.data)->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_flag("--buckets", ea.buckets, "Also report small/medium/large buckets");
  eval_cmd->add_option("--map-at-recall", ea.recall_floor, "Recall floor for the high-recall mAP")
      ->check(CLI::Range(0.0, 1.0));
  eval_cmd->add_option("--csv", ea.csv, "Also write the report as CSV");

  std::string grid, ablate_out;
  auto* ablate_cmd = app.add_subcommand("ablate", "Train every variant of a grid file and tabulate mAP");
  ablate_cmd->add_option("--grid", grid)->required()->check(CLI::ExistingFile);
  ablate_cmd->add_option("--out", ablate_out)->required();

  std::string op;
  bool full_model = false;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Central-difference gradient checks in double precision");
  auto* op_opt = grad_cmd->add_option("--op", op, "One case")->check(CLI::IsMember(gradient_case_names()));
  grad_cmd->add_flag("--full-model", full_model, "The full model loss only")->excludes(op_opt);

  std::string ckpt, image, detect_out;
  double min_score = 0.3;
  auto* detect_cmd = app.add_subcommand("detect", "Run a checkpoint on one PPM image and draw its detections");
  detect_cmd->add_option("--checkpoint", ckpt)->required()->check(CLI::ExistingFile);
  detect_cmd->add_option("--image", image)->required()->check(CLI::ExistingFile);
  detect_cmd->add_option("--out", detect_out)->required();
  detect_cmd->add_option("--min-score", min_score, "Draw detections scoring at least this")->capture_default_str();

  std::string spec, gen_out;
  int count = 0, first = 0;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write synthetic scenes as PPM images plus annotations");
  gen_cmd->add_option("--spec", spec, "Config file whose data.* keys describe the scenes")->check(CLI::ExistingFile);
  gen_cmd->add_option("--count", count)->required()->check(CLI::PositiveNumber);
  gen_cmd->add_option("--first", first, "Index of the first scene")->check(CLI::NonNegativeNumber);
  gen_cmd->add_option("--out", gen_out)->required();

  std::string show_config;
  auto* show_cmd = app.add_subcommand("print-config", "Print every config key with its resolved value");
  show_cmd->add_option("--config", show_config, "Config file applied over the defaults")->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train_cmd) return cmd_train(ta);
    if (*eval_cmd) return cmd_eval(ea);
    if (*ablate_cmd) return cmd_ablate(grid, ablate_out);
    if (*grad_cmd) return cmd_gradcheck(op, full_model);
    if (*detect_cmd) return cmd_detect(ckpt, image, detect_out, min_score);
    if (*gen_cmd) return cmd_gen_data(spec, first, count, gen_out);
    if (*show_cmd) {
      std::cout << to_text(config_or_default(show_config));
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return 0;
}
