#include "stairnet/synth_data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "stairnet/errors.hpp"
#include "stairnet/rng.hpp"

namespace stairnet {

namespace {

constexpr int kSuper = 4;  // subsamples per pixel side for coverage
constexpr double kRingInner = 0.55;
constexpr double kMinContrast = 0.3;

constexpr std::array<std::array<double, 3>, kNumShapeClasses> kBaseColor{{
    {0.90, 0.25, 0.20},
    {0.20, 0.80, 0.30},
    {0.25, 0.35, 0.90},
    {0.90, 0.80, 0.15},
}};

bool inside(int class_id, const BoxXYXY& b, double x, double y) {
  const double cx = 0.5 * (b.x_min + b.x_max), cy = 0.5 * (b.y_min + b.y_max);
  const double r = 0.5 * b.width();
  switch (static_cast<ShapeKind>(class_id)) {
    case ShapeKind::kDisk:
      return (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r;
    case ShapeKind::kSquare:
      return x >= b.x_min && x <= b.x_max && y >= b.y_min && y <= b.y_max;
    case ShapeKind::kTriangle:
      return y >= b.y_min && y <= b.y_max && std::abs(x - cx) <= r * (y - b.y_min) / b.height();
    case ShapeKind::kRing: {
      const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
      return d2 <= r * r && d2 >= kRingInner * kRingInner * r * r;
    }
  }
  return false;
}

std::uint8_t quantize(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

int sample_band(Rng& rng, const std::array<double, 3>& mix) {
  const double u = rng.uniform() * (mix[0] + mix[1] + mix[2]);
  if (u < mix[0]) return 0;
  if (u < mix[0] + mix[1]) return 1;
  return 2;
}

void render(std::vector<double>& img, int size, int class_id, const BoxXYXY& b, const std::array<double, 3>& color) {
  const int x0 = std::max(0, static_cast<int>(std::floor(b.x_min * size)));
  const int y0 = std::max(0, static_cast<int>(std::floor(b.y_min * size)));
  const int x1 = std::min(size - 1, static_cast<int>(std::ceil(b.x_max * size)));
  const int y1 = std::min(size - 1, static_cast<int>(std::ceil(b.y_max * size)));
  for (int py = y0; py <= y1; ++py)
    for (int px = x0; px <= x1; ++px) {
      int hits = 0;
      for (int sy = 0; sy < kSuper; ++sy)
        for (int sx = 0; sx < kSuper; ++sx)
          hits += inside(class_id, b, (px + (sx + 0.5) / kSuper) / size, (py + (sy + 0.5) / kSuper) / size);
      if (!hits) continue;
      const double a = double(hits) / (kSuper * kSuper);
      double* p = img.data() + (static_cast<std::size_t>(py) * size + px) * 3;
      for (int c = 0; c < 3; ++c) p[c] = (1 - a) * p[c] + a * color[c];
    }
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream f(path, mode);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  return f;
}

std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream f(path, mode);
  if (!f) throw IoError("cannot open for reading: " + path.string());
  return f;
}

}  // namespace

const char* shape_name(int class_id) {
  static constexpr const char* kNames[] = {"background", "disk", "square", "triangle", "ring"};
  return class_id >= 0 && class_id <= kNumShapeClasses ? kNames[class_id] : "unknown";
}

int size_band(double side) {
  if (side < kSizeBandEdges[1]) return 0;
  if (side < kSizeBandEdges[2]) return 1;
  return 2;
}

void SceneSpec::validate() const {
  if (image_size < 8) throw ConfigError("data.image_size must be at least 8");
  if (min_objects < 0 || max_objects < min_objects) throw ConfigError("data object count range is invalid");
  for (const auto* mix : {&size_mix, &ring_size_mix}) {
    double total = 0;
    for (double w : *mix) {
      if (!(w >= 0)) throw ConfigError("size mixture weights must be non-negative");
      total += w;
    }
    if (!(total > 0)) throw ConfigError("size mixture must have positive mass");
  }
  if (!(noise >= 0) || !(color_jitter >= 0)) throw ConfigError("data noise amplitudes must be non-negative");
  if (!(max_iou >= 0 && max_iou <= 1)) throw ConfigError("data.max_iou must lie in [0, 1]");
  if (max_retries < 1) throw ConfigError("data.max_retries must be positive");
}

const std::array<double, 3>& SceneSpec::mixture_for(int class_id) const {
  return class_id == static_cast<int>(ShapeKind::kRing) ? ring_size_mix : size_mix;
}

Scene generate_scene(const SceneSpec& spec, int index) {
  spec.validate();
  Rng rng(stream_key(spec.seed, 0x5343454E45ull, static_cast<std::uint64_t>(index)));
  const int n = spec.image_size;
  Scene scene;
  scene.size = n;

  std::vector<double> img(static_cast<std::size_t>(n) * n * 3);
  const double base = rng.uniform(0.3, 0.6);
  for (double& v : img) v = base + rng.uniform(-spec.noise, spec.noise);

  const int count = spec.min_objects + rng.below(spec.max_objects - spec.min_objects + 1);
  for (int k = 0; k < count; ++k) {
    const int cls = 1 + rng.below(kNumShapeClasses);
    const int band = sample_band(rng, spec.mixture_for(cls));
    const double side = rng.uniform(kSizeBandEdges[band], kSizeBandEdges[band + 1]);
    std::array<double, 3> color;
    if (spec.class_colors) {
      for (int c = 0; c < 3; ++c)
        color[c] = std::clamp(kBaseColor[cls - 1][c] + rng.uniform(-spec.color_jitter, spec.color_jitter), 0.0, 1.0);
    } else {
      for (int attempt = 0; attempt < 16; ++attempt) {
        double contrast = 0;
        for (int c = 0; c < 3; ++c) {
          color[c] = rng.uniform();
          contrast = std::max(contrast, std::abs(color[c] - base));
        }
        if (contrast >= kMinContrast) break;
      }
    }
    for (int attempt = 0; attempt < spec.max_retries; ++attempt) {
      const double x = rng.uniform(0.0, 1.0 - side), y = rng.uniform(0.0, 1.0 - side);
      const BoxXYXY box{x, y, x + side, y + side};
      const bool clear = std::all_of(scene.objects.begin(), scene.objects.end(),
                                     [&](const GroundTruth& g) { return iou(g.box, box) <= spec.max_iou; });
      if (!clear) continue;
      render(img, n, cls, box, color);
      scene.objects.push_back({0, cls, box});
      break;
    }
  }
  scene.rgb.resize(img.size());
  std::transform(img.begin(), img.end(), scene.rgb.begin(), quantize);
  return scene;
}

Tensor<float> Dataset::batch(std::span<const int> indices) const {
  const int n = image_size;
  Tensor<float> out(Shape4{static_cast<int>(indices.size()), 3, n, n});
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const auto& px = images.at(indices[b]);
    for (int c = 0; c < 3; ++c) {
      float* dst = out.plane(static_cast<int>(b), c);
      for (int i = 0; i < n * n; ++i) dst[i] = px[static_cast<std::size_t>(i) * 3 + c] / 255.0f - 0.5f;
    }
  }
  return out;
}

std::vector<GroundTruth> Dataset::ground_truth() const {
  std::vector<GroundTruth> out;
  for (const auto& v : objects) out.insert(out.end(), v.begin(), v.end());
  return out;
}

std::vector<GroundTruth> Dataset::ground_truth(std::span<const int> indices) const {
  std::vector<GroundTruth> out;
  for (int i : indices) out.insert(out.end(), objects.at(i).begin(), objects.at(i).end());
  return out;
}

Dataset generate_dataset(const SceneSpec& spec, int first, int count) {
  spec.validate();
  Dataset d;
  d.image_size = spec.image_size;
  d.names.resize(count);
  d.images.resize(count);
  d.objects.resize(count);
#pragma omp parallel for schedule(dynamic, 8)
  for (int i = 0; i < count; ++i) {
    Scene s = generate_scene(spec, first + i);
    for (auto& g : s.objects) g.image_id = i;
    char name[40];
    std::snprintf(name, sizeof name, "images/%06d.ppm", i);
    d.names[i] = name;
    d.images[i] = std::move(s.rgb);
    d.objects[i] = std::move(s.objects);
  }
  return d;
}

void write_ppm(const std::filesystem::path& path, int width, int height, std::span<const std::uint8_t> rgb) {
  if (rgb.size() != static_cast<std::size_t>(width) * height * 3)
    throw DimensionError("ppm pixel buffer does not match " + std::to_string(width) + "x" + std::to_string(height));
  auto f = open_out(path, std::ios::binary);
  f << "P6\n" << width << ' ' << height << "\n255\n";
  f.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

std::vector<std::uint8_t> read_ppm(const std::filesystem::path& path, int& width, int& height) {
  auto f = open_in(path, std::ios::binary);
  const auto token = [&]() {
    std::string t;
    for (int ch; (ch = f.get()) != EOF;) {
      if (ch == '#') {
        while ((ch = f.get()) != EOF && ch != '\n') {}
        continue;
      }
      if (std::isspace(ch)) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(static_cast<char>(ch));
    }
    return t;
  };
  if (token() != "P6") throw ParseError(path.string() + ": not a binary ppm (P6)");
  int maxval = 0;
  try {
    width = std::stoi(token());
    height = std::stoi(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw ParseError(path.string() + ": malformed ppm header");
  }
  if (width <= 0 || height <= 0 || maxval != 255) throw ParseError(path.string() + ": unsupported ppm header");
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(width) * height * 3);
  f.read(reinterpret_cast<char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
  if (f.gcount() != static_cast<std::streamsize>(rgb.size())) throw ParseError(path.string() + ": truncated pixel data");
  return rgb;
}

void write_dataset(const Dataset& data, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "images", ec);
  if (ec) throw IoError("cannot create " + (dir / "images").string() + ": " + ec.message());
  auto manifest = open_out(dir / "manifest.txt");
  for (int i = 0; i < data.size(); ++i) {
    write_ppm(dir / data.names[i], data.image_size, data.image_size, data.images[i]);
    manifest << data.names[i] << '\n';
  }
  auto ann = open_out(dir / "annotations.txt");
  write_ground_truth(ann, data.ground_truth());
  if (!manifest || !ann) throw IoError("write failed under " + dir.string());
}

Dataset read_dataset(const std::filesystem::path& dir) {
  Dataset d;
  auto manifest = open_in(dir / "manifest.txt");
  for (std::string line; std::getline(manifest, line);)
    if (!line.empty()) d.names.push_back(line);
  for (const auto& name : d.names) {
    int w = 0, h = 0;
    d.images.push_back(read_ppm(dir / name, w, h));
    if (w != h) throw ParseError((dir / name).string() + ": images must be square");
    if (d.image_size == 0) d.image_size = w;
    if (w != d.image_size) throw ParseError((dir / name).string() + ": image size differs from the first image");
  }
  d.objects.resize(d.names.size());
  auto ann = open_in(dir / "annotations.txt");
  std::vector<GroundTruth> gts;
  try {
    gts = read_ground_truth(ann);
  } catch (const ParseError& e) {
    throw ParseError((dir / "annotations.txt").string() + ": " + e.what());
  }
  for (const auto& g : gts) {
    if (g.image_id < 0 || g.image_id >= d.size())
      throw ParseError((dir / "annotations.txt").string() + ": image id " + std::to_string(g.image_id) +
                       " not in manifest");
    d.objects[g.image_id].push_back(g);
  }
  return d;
}

}  // namespace stairnet
