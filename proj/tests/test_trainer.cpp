#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>
#include <sstream>

#include "stairnet/errors.hpp"
#include "stairnet/trainer.hpp"

namespace stairnet {
namespace {

ExperimentConfig tiny_experiment() {
  ExperimentConfig cfg;
  cfg.model.backbone.input_size = 32;
  cfg.model.backbone.level_channels = {8, 8, 8, 8, 8};
  cfg.model.combine.channels = 8;
  cfg.model.head_init_gain = 0.1;
  cfg.data.image_size = 32;
  cfg.train.batch_size = 4;
  cfg.train.total_iters = 6;
  cfg.train.lr_decay_iters = {4};
  cfg.train.log_every = 2;
  cfg.train.eval_every = 3;
  cfg.train.train_scenes = 24;
  cfg.train.test_scenes = 8;
  cfg.finalize();
  return cfg;
}

Dataset tiny_data(const ExperimentConfig& cfg) { return generate_dataset(cfg.data, 0, cfg.train.train_scenes); }

ParamStore<double> one_param(double value) {
  ParamStore<double> s;
  s.add("w", Tensor<double>({1, 1, 1, 2}, value));
  s.add("buffer", Tensor<double>({1, 1, 1, 1}, 5.0), false);
  return s;
}

TEST(Sgd, PlainGradientDescent) {
  auto s = one_param(1.0);
  std::vector<Tensor<double>> v;
  sgd_step(s, {Tensor<double>({1, 1, 1, 2}, 0.5), Tensor<double>({1, 1, 1, 1})}, v, 0.1, 0.0, 0.0);
  EXPECT_DOUBLE_EQ(s.value(0)[0], 1.0 - 0.05);
  EXPECT_EQ(s.value(1)[0], 5.0);
}

TEST(Sgd, ZeroGradientZeroDecayLeavesParams) {
  auto s = one_param(0.7);
  std::vector<Tensor<double>> v;
  for (int i = 0; i < 3; ++i) sgd_step(s, {Tensor<double>({1, 1, 1, 2}), Tensor<double>({1, 1, 1, 1})}, v, 0.1, 0.9, 0);
  EXPECT_EQ(s.value(0)[0], 0.7);
}

TEST(Sgd, TwoMomentumStepsByHand) {
  auto s = one_param(0.0);
  std::vector<Tensor<double>> v;
  const double lr = 0.01, g = 2.0;
  for (int i = 0; i < 2; ++i) sgd_step(s, {Tensor<double>({1, 1, 1, 2}, g), Tensor<double>({1, 1, 1, 1})}, v, lr, 0.9, 0);
  EXPECT_NEAR(-s.value(0)[0], lr * g * (1 + 1.9), 1e-15);
}

TEST(Sgd, WeightDecayShrinksNorm) {
  auto s = one_param(1.0);
  s.value(0)[1] = -3.0;
  std::vector<Tensor<double>> v;
  double prev = std::hypot(s.value(0)[0], s.value(0)[1]);
  for (int i = 0; i < 5; ++i) {
    sgd_step(s, {Tensor<double>({1, 1, 1, 2}), Tensor<double>({1, 1, 1, 1})}, v, 0.1, 0.9, 1e-2);
    const double now = std::hypot(s.value(0)[0], s.value(0)[1]);
    EXPECT_LT(now, prev);
    prev = now;
  }
}

TEST(Sgd, NonFiniteGradientNamesParameterAndChangesNothing) {
  auto s = one_param(1.0);
  std::vector<Tensor<double>> v;
  Tensor<double> g({1, 1, 1, 2}, 1.0);
  g[1] = std::numeric_limits<double>::quiet_NaN();
  try {
    sgd_step(s, {g, Tensor<double>({1, 1, 1, 1})}, v, 0.1, 0.9, 0);
    FAIL();
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("'w'"), std::string::npos) << e.what();
  }
  EXPECT_EQ(s.value(0)[0], 1.0);
  EXPECT_THROW(sgd_step(s, {g}, v, 0.1, 0.9, 0), DimensionError);
}

TEST(Schedule, FaithfulSteps) {
  const TrainConfig t = TrainConfig::faithful();
  EXPECT_DOUBLE_EQ(lr_at(0, t), 1e-3);
  EXPECT_DOUBLE_EQ(lr_at(79999, t), 1e-3);
  EXPECT_DOUBLE_EQ(lr_at(80000, t), 1e-4);
  EXPECT_DOUBLE_EQ(lr_at(100000, t), 1e-5);
  EXPECT_DOUBLE_EQ(lr_at(119999, t), 1e-5);
}

TEST(Schedule, ToyStepsAndMonotone) {
  TrainConfig t;
  t.lr = 0.01;
  t.total_iters = 8000;
  t.lr_decay_iters = {4000, 6000};
  EXPECT_DOUBLE_EQ(lr_at(3999, t), 0.01);
  EXPECT_DOUBLE_EQ(lr_at(4000, t), 0.001);
  EXPECT_DOUBLE_EQ(lr_at(6000, t), 0.0001);
  EXPECT_DOUBLE_EQ(lr_at(1000000, t), 0.01 * 0.1 * 0.1);
  for (int i = 1; i < 9000; ++i) EXPECT_LE(lr_at(i, t), lr_at(i - 1, t));
}

Checkpoint sample_checkpoint() {
  Checkpoint c;
  c.iteration = 0x0102030405ull;
  c.config = "train.lr = 0.5\n";
  c.params.push_back({"a.weight", Tensor<float>({2, 1, 3, 1}, {1.5f, -2.f, 0.f, 3.25f, -0.f, 1e-30f})});
  c.params.push_back({"a.running_var", Tensor<float>({1, 2, 1, 1}, 1.f)});
  c.momentum.push_back({"a.weight", Tensor<float>({2, 1, 3, 1}, 0.125f)});
  return c;
}

TEST(Checkpoint, ByteIdenticalRoundTrip) {
  const auto bytes = serialize(sample_checkpoint());
  const Checkpoint back = deserialize(bytes);
  EXPECT_EQ(back.iteration, 0x0102030405ull);
  EXPECT_EQ(back.config, "train.lr = 0.5\n");
  ASSERT_EQ(back.params.size(), 2u);
  EXPECT_EQ(back.params[0].value.shape(), (Shape4{2, 1, 3, 1}));
  EXPECT_TRUE(std::signbit(back.params[0].value[4]));
  EXPECT_EQ(serialize(back), bytes);
  // Little-endian layout: magic, version 1, iteration low byte first.
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 8), "STAIRCKP");
  EXPECT_EQ(bytes[8], 1);
  EXPECT_EQ(bytes[9], 0);
  EXPECT_EQ(bytes[12], 0x05);
  EXPECT_EQ(bytes[16], 0x01);
}

TEST(Checkpoint, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "stairnet_ckpt_test.bin";
  save_checkpoint(sample_checkpoint(), path);
  EXPECT_EQ(serialize(load_checkpoint(path)), serialize(sample_checkpoint()));
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path), IoError);
}

TEST(Checkpoint, MalformedInputsReportOffsets) {
  auto bytes = serialize(sample_checkpoint());
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(deserialize(bad), ParseError);
  bad = bytes;
  bad[8] = 2;
  EXPECT_THROW(deserialize(bad), ParseError);
  bad.assign(bytes.begin(), bytes.end() - 3);
  try {
    deserialize(bad);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("byte"), std::string::npos);
  }
  bad = bytes;
  bad.push_back(0);
  EXPECT_THROW(deserialize(bad), ParseError);
}

TEST(Checkpoint, LoadParamsChecksNamesAndShapes) {
  ParamStore<float> store;
  store.add("a.weight", Tensor<float>({2, 1, 3, 1}));
  store.add("a.running_var", Tensor<float>({1, 2, 1, 1}), false);
  load_params(sample_checkpoint().params, store);
  EXPECT_EQ(store.value(0)[3], 3.25f);
  auto recs = sample_checkpoint().params;
  recs.pop_back();
  EXPECT_THROW(load_params(recs, store), ParseError);
  recs = sample_checkpoint().params;
  recs[0].value = Tensor<float>({1, 1, 1, 1});
  EXPECT_THROW(load_params(recs, store), DimensionError);
}

TEST(Train, SameSeedGivesIdenticalCheckpoints) {
  const auto cfg = tiny_experiment();
  const Dataset data = tiny_data(cfg);
  const auto a = train(cfg, data), b = train(cfg, data);
  ASSERT_FALSE(a.diverged);
  EXPECT_EQ(a.checkpoint.iteration, 6u);
  EXPECT_EQ(serialize(a.checkpoint), serialize(b.checkpoint));
  auto other = cfg;
  other.train.seed = 2;
  EXPECT_NE(serialize(train(other, data).checkpoint), serialize(a.checkpoint));
}

TEST(Train, ResumeEqualsUninterrupted) {
  const auto cfg = tiny_experiment();
  const Dataset data = tiny_data(cfg);
  const auto full = train(cfg, data);
  TrainOptions first;
  first.stop_at = 2;
  const auto part = train(cfg, data, first);
  EXPECT_EQ(part.checkpoint.iteration, 2u);
  // Through the serialized form, as a resumed process would see it.
  const Checkpoint saved = deserialize(serialize(part.checkpoint));
  TrainOptions rest;
  rest.resume = &saved;
  const auto resumed = train(cfg, data, rest);
  EXPECT_EQ(serialize(resumed.checkpoint), serialize(full.checkpoint));
  auto other = cfg;
  other.train.lr = 0.5;
  EXPECT_THROW(train(other, data, rest), ConfigError);
}

TEST(Train, LogsEvaluatesAndRestores) {
  const auto cfg = tiny_experiment();
  const Dataset data = tiny_data(cfg);
  const Dataset test = generate_dataset(cfg.data, 1000, cfg.train.test_scenes);
  std::ostringstream metrics;
  TrainOptions opt;
  opt.metrics = &metrics;
  opt.eval_data = &test;
  const auto res = train(cfg, data, opt);
  std::istringstream lines(metrics.str());
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "iter,loss_total,loss_loc,loss_conf,lr");
  std::vector<int> iters;
  for (const auto& r : res.metrics) iters.push_back(r.iter);
  EXPECT_EQ(iters, (std::vector<int>{0, 2, 4, 5}));
  EXPECT_DOUBLE_EQ(res.metrics[2].lr, cfg.train.lr * 0.1);
  ASSERT_EQ(res.evals.size(), 2u);
  EXPECT_EQ(res.evals[0].iter, 3);
  EXPECT_EQ(res.evals[1].iter, 6);
  EXPECT_EQ(res.loss_history.size(), 6u);

  StairNet<float> net = model_from_checkpoint(res.checkpoint);
  const EvalReport again = evaluate_model(net, test);
  EXPECT_EQ(again.map, res.evals.back().report.map);
}

TEST(Train, DivergenceKeepsLastGoodCheckpoint) {
  auto cfg = tiny_experiment();
  cfg.train.lr = 1e8;
  cfg.model.head_init_gain = 1.0;
  const Dataset data = tiny_data(cfg);
  const auto res = train(cfg, data);
  ASSERT_TRUE(res.diverged);
  EXPECT_FALSE(res.divergence.empty());
  EXPECT_LT(res.checkpoint.iteration, 6u);
  for (const auto& r : res.checkpoint.params)
    for (float v : r.value.vec()) ASSERT_TRUE(std::isfinite(v)) << r.name;
  // The retained snapshot restores into a working model.
  StairNet<float> net = model_from_checkpoint(res.checkpoint);
  EXPECT_EQ(net.store().size(), static_cast<int>(res.checkpoint.params.size()));
}

TEST(Train, InitialConfidenceLossMatchesUniformPrior) {
  // With near-zero logits every selected anchor costs ln(C), and each positive
  // brings neg_ratio negatives.
  auto cfg = tiny_experiment();
  cfg.model.head_init_gain = 1e-4;
  cfg.finalize();
  const Dataset data = tiny_data(cfg);
  StairNet<float> net(cfg.model, cfg.train.seed);
  for (int i = 0; i < net.store().size(); ++i)
    if (net.store().name(i).rfind("head.", 0) == 0 && net.store().name(i).find("bias") != std::string::npos)
      net.store().value(i).fill(0.f);
  const int idx[] = {0, 1, 2, 3};
  std::vector<std::vector<GtBox>> targets;
  for (int i : idx) targets.push_back(to_targets(data.objects[i]));
  Tape<float> tape(&net.store());
  const auto loss = net.loss(tape, tape.input(data.batch(idx), false), targets);
  const double per_positive = loss.breakdown.conf_term / loss.breakdown.num_positive;
  EXPECT_NEAR(per_positive, (1 + cfg.model.loss.neg_ratio) * std::log(5.0), 0.02 * per_positive);
}

TEST(Train, SmoothedLossDecreasesOverWindows) {
  auto cfg = tiny_experiment();
  cfg.train.total_iters = 300;
  cfg.train.lr_decay_iters = {200};
  cfg.train.eval_every = 0;
  cfg.train.batch_size = 8;
  cfg.train.train_scenes = 128;
  const auto res = train(cfg, tiny_data(cfg));
  ASSERT_FALSE(res.diverged);
  ASSERT_EQ(res.loss_history.size(), 300u);
  // Ten checkpoint windows of 30 iterations each.
  std::vector<double> window;
  for (int w = 0; w < 10; ++w)
    window.push_back(std::accumulate(res.loss_history.begin() + 30 * w, res.loss_history.begin() + 30 * (w + 1), 0.0) /
                     30);
  for (int w = 1; w < 10; ++w) EXPECT_LT(window[w], window[w - 1]) << "window " << w;
}

}  // namespace
}  // namespace stairnet
