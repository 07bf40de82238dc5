#include "stairnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>

#include "stairnet/errors.hpp"
#include "stairnet/rng.hpp"

namespace stairnet {

double lr_at(int iter, const TrainConfig& cfg) {
  double lr = cfg.lr;
  for (int d : cfg.lr_decay_iters)
    if (iter >= d) lr *= cfg.decay_factor;
  return lr;
}

template <typename T>
void sgd_step(ParamStore<T>& store, const ParamGrads<T>& grads, std::vector<Tensor<T>>& velocity, double lr,
              double momentum, double weight_decay) {
  if (static_cast<int>(grads.size()) != store.size())
    throw DimensionError("sgd_step: " + std::to_string(grads.size()) + " gradients for " +
                         std::to_string(store.size()) + " parameters");
  for (int i = 0; i < store.size(); ++i) {
    if (!store.trainable(i)) continue;
    if (grads[i].shape() != store.value(i).shape())
      throw DimensionError("sgd_step: gradient of '" + store.name(i) + "' has shape " + grads[i].shape().str());
    for (std::size_t j = 0; j < grads[i].size(); ++j)
      if (!std::isfinite(grads[i][j]))
        throw DivergenceError("non-finite gradient in parameter '" + store.name(i) + "' at element " +
                              std::to_string(j));
  }
  velocity.resize(store.size());
  const T lr_t = static_cast<T>(lr), mom = static_cast<T>(momentum), wd = static_cast<T>(weight_decay);
  for (int i = 0; i < store.size(); ++i) {
    if (!store.trainable(i)) continue;
    Tensor<T>& p = store.value(i);
    Tensor<T>& v = velocity[i];
    if (v.empty()) v = Tensor<T>(p.shape());
    const Tensor<T>& g = grads[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      v[j] = mom * v[j] + g[j] + wd * p[j];
      p[j] -= lr_t * v[j];
    }
  }
}

template void sgd_step<float>(ParamStore<float>&, const ParamGrads<float>&, std::vector<Tensor<float>>&, double,
                              double, double);
template void sgd_step<double>(ParamStore<double>&, const ParamGrads<double>&, std::vector<Tensor<double>>&, double,
                               double, double);

std::string metrics_header() { return "iter,loss_total,loss_loc,loss_conf,lr"; }

std::string format_metrics(const MetricsRow& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%.6f,%.6g", r.iter, r.loss_total, r.loss_loc, r.loss_conf, r.lr);
  return buf;
}

namespace {

void require_finite_store(const ParamStore<float>& store) {
  for (int i = 0; i < store.size(); ++i)
    for (float v : store.value(i).vec())
      if (!std::isfinite(v)) throw DivergenceError("non-finite value in '" + store.name(i) + "'");
}

std::vector<TensorRecord> momentum_records(const ParamStore<float>& store, const std::vector<Tensor<float>>& vel) {
  std::vector<TensorRecord> out;
  for (int i = 0; i < store.size(); ++i) {
    if (!store.trainable(i)) continue;
    const bool have = i < static_cast<int>(vel.size()) && !vel[i].empty();
    out.push_back({store.name(i), have ? vel[i] : Tensor<float>(store.value(i).shape())});
  }
  return out;
}

void load_momentum(const std::vector<TensorRecord>& records, const ParamStore<float>& store,
                   std::vector<Tensor<float>>& vel) {
  vel.assign(store.size(), Tensor<float>());
  for (const auto& r : records) {
    const int id = store.find(r.name);
    if (id < 0 || !store.trainable(id)) throw ParseError("checkpoint momentum for unknown parameter '" + r.name + "'");
    if (r.value.shape() != store.value(id).shape())
      throw DimensionError("checkpoint momentum for '" + r.name + "' has shape " + r.value.shape().str());
    vel[id] = r.value;
  }
}

class SampleStream {
 public:
  SampleStream(int n, std::uint64_t seed) : n_(n), seed_(seed) {}

  int at(std::int64_t k) {
    const std::int64_t epoch = k / n_;
    auto it = perms_.find(epoch);
    if (it == perms_.end()) {
      if (perms_.size() > 4) perms_.erase(perms_.begin());
      it = perms_.emplace(epoch, keyed_permutation(n_, seed_, static_cast<std::uint64_t>(epoch))).first;
    }
    return it->second[static_cast<std::size_t>(k % n_)];
  }

 private:
  int n_;
  std::uint64_t seed_;
  std::map<std::int64_t, std::vector<int>> perms_;
};

}  // namespace

ExperimentConfig config_from_checkpoint(const Checkpoint& ckpt) {
  ExperimentConfig cfg = parse_config_text(ckpt.config);
  cfg.finalize();
  return cfg;
}

StairNet<float> model_from_checkpoint(const Checkpoint& ckpt) {
  const ExperimentConfig cfg = config_from_checkpoint(ckpt);
  StairNet<float> net(cfg.model, cfg.train.seed);
  load_params(ckpt.params, net.store());
  return net;
}

std::vector<Detection> detect_dataset(StairNet<float>& net, const Dataset& data, int batch) {
  std::vector<Detection> dets;
  std::vector<int> idx;
  for (int b0 = 0; b0 < data.size(); b0 += batch) {
    idx.clear();
    for (int i = b0; i < std::min(data.size(), b0 + batch); ++i) idx.push_back(i);
    const auto d = net.detect(data.batch(idx), b0);
    dets.insert(dets.end(), d.begin(), d.end());
  }
  return dets;
}

EvalReport evaluate_model(StairNet<float>& net, const Dataset& data, const EvalOptions& opt) {
  return evaluate(detect_dataset(net, data), data.ground_truth(), opt);
}

TrainResult train(const ExperimentConfig& cfg_in, const Dataset& data, const TrainOptions& opt) {
  ExperimentConfig cfg = cfg_in;
  cfg.finalize();
  if (data.size() == 0) throw ConfigError("training dataset is empty");
  if (data.image_size != cfg.model.backbone.input_size)
    throw DimensionError("dataset images are " + std::to_string(data.image_size) + " px, model expects " +
                         std::to_string(cfg.model.backbone.input_size));
  const TrainConfig& tc = cfg.train;
  const std::string cfg_text = to_text(cfg);

  StairNet<float> net(cfg.model, tc.seed);
  std::vector<Tensor<float>> velocity;
  int start = 0;
  if (opt.resume) {
    if (opt.resume->config != cfg_text) throw ConfigError("resume checkpoint was written with a different config");
    load_params(opt.resume->params, net.store());
    load_momentum(opt.resume->momentum, net.store(), velocity);
    start = static_cast<int>(opt.resume->iteration);
  }
  const int stop = opt.stop_at < 0 ? tc.total_iters : std::min(opt.stop_at, tc.total_iters);

  const auto snapshot = [&](int iter) {
    Checkpoint c;
    c.iteration = static_cast<std::uint64_t>(iter);
    c.config = cfg_text;
    c.params = param_records(net.store());
    c.momentum = momentum_records(net.store(), velocity);
    return c;
  };
  const auto run_eval = [&](int iter, TrainResult& res) {
    if (!opt.eval_data || opt.eval_data->size() == 0) return;
    res.evals.push_back({iter, evaluate_model(net, *opt.eval_data, opt.eval)});
    if (opt.log)
      *opt.log << "eval iter " << iter << " mAP " << res.evals.back().report.map << " small "
               << res.evals.back().report.bucket_map[0] << '\n';
  };

  TrainResult res;
  res.checkpoint = snapshot(start);
  if (opt.metrics && !opt.resume) *opt.metrics << metrics_header() << '\n';

  SampleStream stream(data.size(), tc.seed);
  std::vector<int> idx(tc.batch_size);
  std::vector<std::vector<GtBox>> targets(tc.batch_size);
  for (int it = start; it < stop; ++it) {
    for (int j = 0; j < tc.batch_size; ++j) {
      idx[j] = stream.at(static_cast<std::int64_t>(it) * tc.batch_size + j);
      targets[j] = to_targets(data.objects[idx[j]]);
    }
    const double lr = lr_at(it, tc);
    try {
      Tape<float> tape(&net.store(), true);
      const auto loss = net.loss(tape, tape.input(data.batch(idx), false), targets);
      const double total = tape.value(loss.total)[0];
      if (!std::isfinite(total)) throw DivergenceError("non-finite loss at iteration " + std::to_string(it));
      const auto grads = tape.backward(loss.total);
      sgd_step(net.store(), grads, velocity, lr, tc.momentum, tc.weight_decay);
      require_finite_store(net.store());
      res.loss_history.push_back(total);
      if (it % tc.log_every == 0 || it + 1 == stop) {
        const double n = std::max(1, loss.breakdown.num_positive);
        const MetricsRow row{it, total, loss.breakdown.loc_term / n, loss.breakdown.conf_term / n, lr};
        res.metrics.push_back(row);
        if (opt.metrics) *opt.metrics << format_metrics(row) << '\n';
        if (opt.log) *opt.log << "iter " << it << " loss " << total << " lr " << lr << '\n';
      }
    } catch (const DivergenceError& e) {
      res.diverged = true;
      res.divergence = std::string(e.what()) + " (iteration " + std::to_string(it) + ")";
      if (opt.log) *opt.log << "diverged: " << res.divergence << '\n';
      return res;
    }
    const int done = it + 1;
    if (tc.eval_every > 0 && done % tc.eval_every == 0 && done != stop) {
      res.checkpoint = snapshot(done);
      run_eval(done, res);
    }
  }
  res.checkpoint = snapshot(stop);
  if (stop == tc.total_iters) run_eval(stop, res);
  return res;
}

}  // namespace stairnet
