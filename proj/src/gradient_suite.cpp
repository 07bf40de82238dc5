#include "stairnet/gradient_suite.hpp"

#include <algorithm>
#include <functional>
#include <map>

#include "stairnet/errors.hpp"
#include "stairnet/grad_check.hpp"
#include "stairnet/model.hpp"
#include "stairnet/rng.hpp"

namespace stairnet {

namespace {

constexpr double kOpTolerance = 1e-6;
constexpr double kModelTolerance = 1e-4;

Tensor<double> random(Shape4 s, std::uint64_t seed, double lo = -1, double hi = 1) {
  Rng rng(seed);
  Tensor<double> t(s);
  for (auto& v : t.vec()) v = rng.uniform(lo, hi);
  return t;
}

void jitter(ParamStore<double>& store, std::uint64_t seed, double amplitude) {
  Rng rng(seed);
  for (int i = 0; i < store.size(); ++i)
    if (store.trainable(i))
      for (auto& v : store.value(i).vec()) v += rng.uniform(-amplitude, amplitude);
}

GradCheckOptions op_options(ParamStore<double>* store) {
  GradCheckOptions o;
  o.store = store;
  o.max_coords = 150;
  return o;
}

/// Checks d(dot(op(x), r))/dx plus every parameter of `store`.
double check_op(ParamStore<double>& store, const Tensor<double>& x,
                const std::function<Var(Tape<double>&, Var)>& op, std::uint64_t seed) {
  Shape4 out_shape;
  {
    Tape<double> t(&store);
    out_shape = t.value(op(t, t.input(x))).shape();
  }
  const Tensor<double> r = random(out_shape, seed);
  const auto graph = [&](Tape<double>& t, Var v) { return ops::dot(t, op(t, v), r); };
  const GradCheckOptions opt = op_options(&store);
  double err = grad_check(graph, x, opt);
  for (const auto& pc : grad_check_params([&](Tape<double>& t) { return graph(t, t.input(x)); }, store, opt))
    err = std::max(err, pc.max_rel_error);
  return err;
}

double conv_case() {
  ParamStore<double> store;
  ParamInit init(17);
  const ConvParams p = add_conv(store, "c", 4, 5, 3, 2, 1, init);
  jitter(store, 1, 0.1);
  return check_op(store, random({2, 4, 9, 9}, 161), [&](Tape<double>& t, Var v) { return ops::conv2d(t, v, p); }, 2);
}

double deconv_case() {
  ParamStore<double> store;
  ParamInit init(18);
  const ConvParams p = add_deconv(store, "d", 4, 3, 2, 2, 0, init);
  jitter(store, 3, 0.5);
  return check_op(store, random({2, 4, 5, 5}, 171),
                  [&](Tape<double>& t, Var v) { return ops::deconv2d(t, v, p, 9, 9); }, 4);
}

double batchnorm_train_case() {
  ParamStore<double> store;
  const BatchNormState s = add_batchnorm(store, "bn", 3);
  store.value(s.gamma) = random({1, 3, 1, 1}, 181, 0.5, 1.5);
  return check_op(store, random({2, 3, 5, 5}, 182), [&](Tape<double>& t, Var v) { return ops::batchnorm(t, v, s); },
                  5);
}

double batchnorm_infer_case() {
  ParamStore<double> store;
  const BatchNormState s = add_batchnorm(store, "bn", 3);
  store.value(s.running_var) = random({1, 3, 1, 1}, 184, 0.5, 1.5);
  store.value(s.running_mean) = random({1, 3, 1, 1}, 185);
  const Tensor<double> x = random({2, 3, 5, 5}, 186);
  const Tensor<double> r = random(x.shape(), 187);
  Tensor<double> analytic;
  {
    Tape<double> t(&store, false);
    const Var v = t.input(x);
    t.backward(ops::dot(t, ops::batchnorm(t, v, s), r));
    analytic = t.grad(v);
  }
  const auto f = [&](const Tensor<double>& at) {
    Tape<double> t(&store, false);
    return t.value(ops::dot(t, ops::batchnorm(t, t.input(at), s), r))[0];
  };
  return compare_with_central_differences(f, x, analytic, op_options(&store));
}

double relu_case() {
  ParamStore<double> store;
  return check_op(store, random({2, 3, 6, 6}, 191), [](Tape<double>& t, Var v) { return ops::relu(t, v); }, 6);
}

double maxpool_case() {
  ParamStore<double> store;
  return check_op(store, random({2, 3, 8, 8}, 192), [](Tape<double>& t, Var v) { return ops::maxpool2d(t, v, 2, 2); },
                  7);
}

double eltwise_case(EltwiseMode mode) {
  ParamStore<double> store;
  const Tensor<double> other = random({2, 3, 4, 4}, 201);
  double err = check_op(store, random({2, 3, 4, 4}, 202),
                        [&](Tape<double>& t, Var v) { return ops::eltwise(t, v, t.input(other), mode); }, 8);
  err = std::max(err, check_op(store, random({2, 3, 4, 4}, 203),
                               [&](Tape<double>& t, Var v) { return ops::eltwise(t, t.input(other), v, mode); }, 9));
  return err;
}

double bilinear_case() {
  ParamStore<double> store;
  return check_op(store, random({2, 3, 5, 5}, 211),
                  [](Tape<double>& t, Var v) { return ops::bilinear_upsample(t, v, 10, 9); }, 10);
}

double gather_case() {
  // Two levels, two boxes per cell with three channels each; gathers channels 1..2 of every box.
  ParamStore<double> store;
  const Tensor<double> second = random({2, 6, 2, 2}, 221);
  return check_op(store, random({2, 6, 3, 3}, 222), [&](Tape<double>& t, Var v) {
    return ops::gather_anchors(t, {v, t.input(second)}, 2, 3, 1, 2);
  }, 11);
}

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.backbone.input_size = 32;
  cfg.backbone.level_channels = {4, 6, 6, 6, 6};
  cfg.combine.channels = 4;
  cfg.head.num_classes = 3;
  cfg.finalize();
  return cfg;
}

std::vector<std::vector<GtBox>> tiny_targets() {
  return {{{{0.1, 0.1, 0.4, 0.45}, 1}, {{0.5, 0.2, 0.95, 0.9}, 2}},
          {{{0.3, 0.3, 0.6, 0.6}, 2}},
          {{{0.05, 0.6, 0.3, 0.95}, 1}, {{0.6, 0.05, 0.9, 0.4}, 1}}};
}

double multibox_loss_case() {
  const ModelConfig cfg = tiny_config();
  const DefaultBoxSet anchors = generate_default_boxes(cfg.boxes);
  const int a = static_cast<int>(anchors.size());
  const auto targets = tiny_targets();
  const Tensor<double> conf = random({3, 1, a, cfg.head.num_classes}, 231, -2, 2);
  const Tensor<double> loc = random({3, 1, a, 4}, 232, -2, 2);
  std::vector<MatchResult> matches;
  for (const auto& t : targets) matches.push_back(match_anchors(anchors, t, cfg.loss.iou_threshold));
  const auto graph = [&](Tape<double>& t, Var l, Var c) {
    return multibox_loss(t, l, c, anchors, targets, matches, cfg.boxes.variances, cfg.loss).total;
  };
  GradCheckOptions opt = op_options(nullptr);
  opt.max_coords = 400;
  double err = grad_check([&](Tape<double>& t, Var v) { return graph(t, v, t.input(conf)); }, loc, opt);
  err = std::max(err, grad_check([&](Tape<double>& t, Var v) { return graph(t, t.input(loc), v); }, conf, opt));
  return err;
}

double full_model_case() {
  StairNet<double> net(tiny_config(), 5);
  jitter(net.store(), 6, 0.1);
  const Tensor<double> images = random({3, 3, 32, 32}, 241, -0.5, 0.5);
  const auto targets = tiny_targets();
  GradCheckOptions opt;
  opt.store = &net.store();
  opt.max_coords = 40;
  opt.eps = 1e-6;
  // Shifts feeding a batchnorm have zero true gradient; the floor keeps
  // their roundoff-level differences from reading as relative error.
  opt.denom_floor = 1e-3;
  double err = 0;
  for (const auto& pc : grad_check_params(
           [&](Tape<double>& t) { return net.loss(t, t.input(images, false), targets).total; }, net.store(), opt))
    err = std::max(err, pc.max_rel_error);
  return err;
}

const std::vector<std::pair<std::string, std::function<double()>>>& cases() {
  static const std::vector<std::pair<std::string, std::function<double()>>> kCases = {
      {"conv2d", conv_case},
      {"deconv2d", deconv_case},
      {"batchnorm_train", batchnorm_train_case},
      {"batchnorm_infer", batchnorm_infer_case},
      {"relu", relu_case},
      {"maxpool2d", maxpool_case},
      {"eltwise_sum", [] { return eltwise_case(EltwiseMode::kSum); }},
      {"eltwise_max", [] { return eltwise_case(EltwiseMode::kMax); }},
      {"eltwise_product", [] { return eltwise_case(EltwiseMode::kProduct); }},
      {"bilinear_upsample", bilinear_case},
      {"gather_anchors", gather_case},
      {"multibox_loss", multibox_loss_case},
      {"full_model", full_model_case},
  };
  return kCases;
}

}  // namespace

std::vector<std::string> gradient_case_names() {
  std::vector<std::string> out;
  for (const auto& c : cases()) out.push_back(c.first);
  return out;
}

GradCase run_gradient_case(const std::string& name) {
  for (const auto& [n, fn] : cases())
    if (n == name) return {n, fn(), n == "full_model" ? kModelTolerance : kOpTolerance};
  throw ConfigError("unknown gradient case '" + name + "'");
}

std::vector<GradCase> run_gradient_suite(bool include_full_model) {
  std::vector<GradCase> out;
  for (const auto& [n, fn] : cases()) {
    if (n == "full_model" && !include_full_model) continue;
    out.push_back(run_gradient_case(n));
  }
  return out;
}

}  // namespace stairnet
