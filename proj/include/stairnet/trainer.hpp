#pragma once
// SGD with momentum and weight decay, the step learning-rate schedule, and the
// deterministic training loop with periodic held-out evaluation.

#include <iosfwd>
#include <string>
#include <vector>

#include "stairnet/checkpoint.hpp"
#include "stairnet/config.hpp"
#include "stairnet/model.hpp"
#include "stairnet/synth_data.hpp"
#include "stairnet/voc_eval.hpp"

namespace stairnet {

/// Base lr scaled by decay_factor once for every decay iteration <= iter.
double lr_at(int iter, const TrainConfig& cfg);

/// v <- momentum * v + grad + weight_decay * param; param <- param - lr * v, for
/// trainable entries. Buffers in `velocity` are created on first use. A
/// non-finite gradient throws DivergenceError naming the parameter before
/// anything is modified.
template <typename T>
void sgd_step(ParamStore<T>& store, const ParamGrads<T>& grads, std::vector<Tensor<T>>& velocity, double lr,
              double momentum, double weight_decay);

struct MetricsRow {
  int iter = 0;
  double loss_total = 0;
  double loss_loc = 0;   // normalized by positives
  double loss_conf = 0;  // normalized by positives
  double lr = 0;
};

std::string metrics_header();
std::string format_metrics(const MetricsRow& row);

struct EvalPoint {
  int iter = 0;
  EvalReport report;
};

struct TrainOptions {
  const Dataset* eval_data = nullptr;  // held-out split evaluated every eval_every iterations
  EvalOptions eval;
  std::ostream* metrics = nullptr;     // CSV rows every log_every iterations
  std::ostream* log = nullptr;         // human-readable progress
  const Checkpoint* resume = nullptr;  // continue from this state
  int stop_at = -1;                    // stop after this iteration count (-1: total_iters)
};

struct TrainResult {
  Checkpoint checkpoint;  // final state, or the last good snapshot after divergence
  std::vector<MetricsRow> metrics;
  std::vector<double> loss_history;  // every iteration run
  std::vector<EvalPoint> evals;
  bool diverged = false;
  std::string divergence;
};

/// Deterministic given the config: sample k of the stream is
/// keyed_permutation(N, seed, k / N)[k % N], so a resumed run sees the same data.
TrainResult train(const ExperimentConfig& cfg, const Dataset& data, const TrainOptions& opt = {});

/// Rebuilds the model a checkpoint was trained with.
StairNet<float> model_from_checkpoint(const Checkpoint& ckpt);
ExperimentConfig config_from_checkpoint(const Checkpoint& ckpt);

std::vector<Detection> detect_dataset(StairNet<float>& net, const Dataset& data, int batch = 50);
EvalReport evaluate_model(StairNet<float>& net, const Dataset& data, const EvalOptions& opt = {});

}  // namespace stairnet
