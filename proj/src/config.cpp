#include "stairnet/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <sstream>

#include "stairnet/errors.hpp"

namespace stairnet {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size())
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

long long to_integer(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size())
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  for (std::string item; std::getline(ss, item, ',');) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string fmt(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <typename C>
std::string fmt_list(const C& values) {
  std::string out;
  for (const auto& v : values) {
    if (!out.empty()) out += ',';
    if constexpr (std::is_floating_point_v<std::decay_t<decltype(v)>>)
      out += fmt(v);
    else
      out += std::to_string(v);
  }
  return out;
}

template <typename T, std::size_t N>
void set_array(const std::string& key, const std::string& v, std::array<T, N>& out) {
  const auto items = split_list(v);
  if (items.size() != N) throw ConfigError(key + ": expected " + std::to_string(N) + " comma-separated values");
  for (std::size_t i = 0; i < N; ++i) {
    if constexpr (std::is_floating_point_v<T>)
      out[i] = to_double(key, items[i]);
    else
      out[i] = static_cast<T>(to_integer(key, items[i]));
  }
}

struct Field {
  const char* key;
  std::function<void(ExperimentConfig&, const std::string& key, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define REAL(k, member) \
  Field{k, [](ExperimentConfig& c, const std::string& key, const std::string& v) { c.member = to_double(key, v); }, \
        [](const ExperimentConfig& c) { return fmt(c.member); }}
#define INT(k, member)                                                                                      \
  Field{k,                                                                                                  \
        [](ExperimentConfig& c, const std::string& key, const std::string& v) {                            \
          c.member = static_cast<decltype(c.member)>(to_integer(key, v));                                  \
        },                                                                                                  \
        [](const ExperimentConfig& c) { return std::to_string(c.member); }}
#define BOOL(k, member) \
  Field{k, [](ExperimentConfig& c, const std::string& key, const std::string& v) { c.member = to_bool(key, v); }, \
        [](const ExperimentConfig& c) { return std::string(c.member ? "true" : "false"); }}
#define ARRAY(k, member) \
  Field{k, [](ExperimentConfig& c, const std::string& key, const std::string& v) { set_array(key, v, c.member); }, \
        [](const ExperimentConfig& c) { return fmt_list(c.member); }}
#define ENUM(k, member, parse)                                                                              \
  Field{k, [](ExperimentConfig& c, const std::string&, const std::string& v) { c.member = parse(v); },     \
        [](const ExperimentConfig& c) { return to_string(c.member); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> kFields = {
      INT("backbone.input_size", model.backbone.input_size),
      INT("backbone.in_channels", model.backbone.in_channels),
      ARRAY("backbone.strides", model.backbone.level_strides),
      ARRAY("backbone.channels", model.backbone.level_channels),
      INT("backbone.blocks_per_level", model.backbone.blocks_per_level),
      BOOL("combine.enabled", model.combine.enabled),
      ENUM("combine.mode", model.combine.mode, parse_combine_mode),
      ENUM("combine.upsample", model.combine.upsample, parse_upsample),
      ENUM("combine.refine", model.combine.refine, parse_refine),
      INT("combine.channels", model.combine.channels),
      Field{"boxes.scales",
            [](ExperimentConfig& c, const std::string& key, const std::string& v) {
              c.model.boxes.scales.clear();
              for (const auto& s : split_list(v)) c.model.boxes.scales.push_back(to_double(key, s));
            },
            [](const ExperimentConfig& c) { return fmt_list(c.model.boxes.scales); }},
      REAL("boxes.extra_scale", model.boxes.extra_scale),
      Field{"boxes.aspect_ratios",
            [](ExperimentConfig& c, const std::string& key, const std::string& v) {
              c.model.boxes.aspect_ratios.clear();
              for (const auto& s : split_list(v)) c.model.boxes.aspect_ratios.push_back(to_double(key, s));
            },
            [](const ExperimentConfig& c) { return fmt_list(c.model.boxes.aspect_ratios); }},
      REAL("boxes.variance_center", model.boxes.variances.center),
      REAL("boxes.variance_size", model.boxes.variances.size),
      BOOL("boxes.clip", model.boxes.clip),
      ENUM("head.mode", model.head.mode, parse_head_mode),
      INT("head.num_classes", model.head.num_classes),
      REAL("head.init_gain", model.head_init_gain),
      REAL("loss.iou_threshold", model.loss.iou_threshold),
      REAL("loss.neg_ratio", model.loss.neg_ratio),
      REAL("decode.score_threshold", model.decode.score_threshold),
      REAL("decode.nms_iou", model.decode.nms_iou),
      INT("decode.per_class_topk", model.decode.per_class_topk),
      INT("decode.image_topk", model.decode.image_topk),
      REAL("train.lr", train.lr),
      REAL("train.momentum", train.momentum),
      REAL("train.weight_decay", train.weight_decay),
      INT("train.batch_size", train.batch_size),
      INT("train.total_iters", train.total_iters),
      Field{"train.lr_decay_iters",
            [](ExperimentConfig& c, const std::string& key, const std::string& v) {
              c.train.lr_decay_iters.clear();
              for (const auto& s : split_list(v))
                c.train.lr_decay_iters.push_back(static_cast<int>(to_integer(key, s)));
            },
            [](const ExperimentConfig& c) { return fmt_list(c.train.lr_decay_iters); }},
      REAL("train.decay_factor", train.decay_factor),
      INT("train.seed", train.seed),
      INT("train.log_every", train.log_every),
      INT("train.eval_every", train.eval_every),
      INT("data.train_scenes", train.train_scenes),
      INT("data.test_scenes", train.test_scenes),
      INT("data.image_size", data.image_size),
      INT("data.min_objects", data.min_objects),
      INT("data.max_objects", data.max_objects),
      ARRAY("data.size_mix", data.size_mix),
      ARRAY("data.ring_size_mix", data.ring_size_mix),
      REAL("data.noise", data.noise),
      BOOL("data.class_colors", data.class_colors),
      REAL("data.color_jitter", data.color_jitter),
      REAL("data.max_iou", data.max_iou),
      INT("data.max_retries", data.max_retries),
      INT("data.seed", data.seed),
  };
  return kFields;
}

#undef REAL
#undef INT
#undef BOOL
#undef ARRAY
#undef ENUM

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0)) throw ConfigError("train.lr must be positive");
  if (!(momentum >= 0 && momentum < 1)) throw ConfigError("train.momentum must lie in [0,1)");
  if (!(weight_decay >= 0)) throw ConfigError("train.weight_decay must be non-negative");
  if (batch_size < 1) throw ConfigError("train.batch_size must be positive");
  if (total_iters < 0) throw ConfigError("train.total_iters must be non-negative");
  for (std::size_t i = 0; i < lr_decay_iters.size(); ++i) {
    if (i > 0 && lr_decay_iters[i] <= lr_decay_iters[i - 1])
      throw ConfigError("train.lr_decay_iters must be strictly increasing");
    if (lr_decay_iters[i] <= 0 || lr_decay_iters[i] >= total_iters)
      throw ConfigError("train.lr_decay_iters must lie in (0, total_iters)");
  }
  if (!(decay_factor > 0 && decay_factor <= 1)) throw ConfigError("train.decay_factor must lie in (0,1]");
  if (log_every < 1) throw ConfigError("train.log_every must be positive");
  if (eval_every < 0) throw ConfigError("train.eval_every must be non-negative");
  if (train_scenes < 1 || test_scenes < 0) throw ConfigError("data scene counts are invalid");
}

TrainConfig TrainConfig::faithful() {
  TrainConfig t;
  t.lr = 1e-3;
  t.total_iters = 120000;
  t.lr_decay_iters = {80000, 100000};
  t.eval_every = 10000;
  return t;
}

void ExperimentConfig::finalize() {
  model.finalize();
  train.validate();
  data.validate();
  if (data.image_size != model.backbone.input_size)
    throw ConfigError("data.image_size (" + std::to_string(data.image_size) + ") must equal backbone.input_size (" +
                      std::to_string(model.backbone.input_size) + ")");
  if (model.head.num_classes != kNumShapeClasses + 1)
    throw ConfigError("head.num_classes must be " + std::to_string(kNumShapeClasses + 1) +
                      " for the synthetic shapes (background included)");
}

void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (key != f.key) continue;
    try {
      f.set(cfg, key, value);
    } catch (const ConfigError& e) {
      const std::string msg = e.what();
      throw ConfigError(msg.rfind(key, 0) == 0 ? msg : key + ": " + msg);
    }
    return;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::vector<ConfigLine> read_config_lines(std::istream& is) {
  std::vector<ConfigLine> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    out.push_back({lineno, trim(line.substr(0, eq)), trim(line.substr(eq + 1))});
  }
  return out;
}

ExperimentConfig parse_config(std::istream& is, ExperimentConfig base) {
  for (const auto& l : read_config_lines(is)) {
    try {
      apply_setting(base, l.key, l.value);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(l.line) + ": " + e.what());
    }
  }
  return base;
}

ExperimentConfig parse_config_text(const std::string& text, ExperimentConfig base) {
  std::istringstream ss(text);
  return parse_config(ss, std::move(base));
}

ExperimentConfig load_config(const std::string& path, ExperimentConfig base) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config: " + path);
  try {
    return parse_config(f, std::move(base));
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string to_text(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + " = " + f.get(cfg) + "\n";
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.emplace_back(f.key);
  return keys;
}

}  // namespace stairnet
