#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "stairnet/config.hpp"
#include "stairnet/errors.hpp"
#include "stairnet/rng.hpp"
#include "stairnet/synth_data.hpp"

namespace stairnet {
namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("stairnet_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

bool within_3_sigma(int count, int n, double p) {
  return std::abs(count - n * p) <= 3 * std::sqrt(n * p * (1 - p));
}

TEST(SynthData, SceneIsPureFunctionOfSeedAndIndex) {
  SceneSpec spec;
  spec.seed = 42;
  const Scene a = generate_scene(spec, 17), b = generate_scene(spec, 17), c = generate_scene(spec, 18);
  EXPECT_EQ(a.rgb, b.rgb);
  ASSERT_EQ(a.objects.size(), b.objects.size());
  for (std::size_t i = 0; i < a.objects.size(); ++i) {
    EXPECT_EQ(a.objects[i].class_id, b.objects[i].class_id);
    EXPECT_EQ(a.objects[i].box.x_min, b.objects[i].box.x_min);
    EXPECT_EQ(a.objects[i].box.y_max, b.objects[i].box.y_max);
  }
  EXPECT_NE(a.rgb, c.rgb);
  spec.seed = 43;
  EXPECT_NE(generate_scene(spec, 17).rgb, a.rgb);
}

TEST(SynthData, NoObjectsIsPureBackground) {
  SceneSpec spec;
  spec.min_objects = spec.max_objects = 0;
  spec.noise = 0.0;
  const Scene s = generate_scene(spec, 3);
  EXPECT_TRUE(s.objects.empty());
  ASSERT_EQ(s.rgb.size(), 64u * 64 * 3);
  EXPECT_TRUE(std::all_of(s.rgb.begin(), s.rgb.end(), [&](std::uint8_t v) { return v == s.rgb[0]; }));
}

TEST(SynthData, AnnotationsAreTightBounds) {
  SceneSpec spec;
  spec.min_objects = spec.max_objects = 1;
  spec.noise = 0.0;
  for (int idx = 0; idx < 200; ++idx) {
    const Scene s = generate_scene(spec, idx);
    ASSERT_EQ(s.objects.size(), 1u);
    const BoxXYXY& b = s.objects[0].box;
    // With zero noise the background is flat; sample it from a corner the box avoids.
    const int ref = b.x_min * 64 >= 1 || b.y_min * 64 >= 1 ? 0 : 63 * 64 + 63;
    int x0 = 64, y0 = 64, x1 = -1, y1 = -1;
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        bool differs = false;
        for (int c = 0; c < 3; ++c) differs |= s.rgb[(y * 64 + x) * 3 + c] != s.rgb[ref * 3 + c];
        if (!differs) continue;
        x0 = std::min(x0, x), y0 = std::min(y0, y), x1 = std::max(x1, x), y1 = std::max(y1, y);
      }
    // Painted pixels never leave the box (one pixel of slack for partial coverage),
    // and the painted extent spans it up to shape geometry and sampling.
    ASSERT_GE(x1, 0) << idx;
    EXPECT_GE(x0, std::floor(b.x_min * 64) - 1e-9) << idx;
    EXPECT_GE(y0, std::floor(b.y_min * 64) - 1e-9) << idx;
    EXPECT_LE(x1, std::ceil(b.x_max * 64)) << idx;
    EXPECT_LE(y1, std::ceil(b.y_max * 64)) << idx;
    EXPECT_LE(std::abs((x1 - x0 + 1) - b.width() * 64), 2.0) << idx;
    EXPECT_LE(std::abs((y1 - y0 + 1) - b.height() * 64), 2.0) << idx;
  }
}

TEST(SynthData, BoxesValidAndSeparated) {
  SceneSpec spec;
  int total = 0;
  for (int idx = 0; idx < 500; ++idx) {
    const Scene s = generate_scene(spec, idx);
    EXPECT_LE(static_cast<int>(s.objects.size()), spec.max_objects);
    for (std::size_t i = 0; i < s.objects.size(); ++i) {
      const BoxXYXY& b = s.objects[i].box;
      EXPECT_GT(b.area(), 0);
      EXPECT_GE(b.x_min, 0);
      EXPECT_GE(b.y_min, 0);
      EXPECT_LE(b.x_max, 1);
      EXPECT_LE(b.y_max, 1);
      EXPECT_GE(s.objects[i].class_id, 1);
      EXPECT_LE(s.objects[i].class_id, kNumShapeClasses);
      for (std::size_t j = 0; j < i; ++j) EXPECT_LE(iou(b, s.objects[j].box), spec.max_iou);
      ++total;
    }
  }
  EXPECT_GT(total, 500);
}

TEST(SynthData, SizeMixtureMatchesSpec) {
  SceneSpec spec;
  std::array<std::array<int, 3>, kNumShapeClasses> counts{};
  std::array<int, kNumShapeClasses> per_class{};
  int total = 0;
  for (int idx = 0; total < 4000; ++idx)
    for (const auto& g : generate_scene(spec, idx).objects) {
      ++counts[g.class_id - 1][size_band(g.box.width())];
      ++per_class[g.class_id - 1];
      ++total;
    }
  for (int c = 1; c <= kNumShapeClasses; ++c) {
    const auto& mix = spec.mixture_for(c);
    const double sum = mix[0] + mix[1] + mix[2];
    for (int b = 0; b < 3; ++b)
      EXPECT_TRUE(within_3_sigma(counts[c - 1][b], per_class[c - 1], mix[b] / sum))
          << shape_name(c) << " band " << b << ": " << counts[c - 1][b] << " of " << per_class[c - 1];
  }
}

TEST(SynthData, ClassBalanceOverThousandScenes) {
  SceneSpec spec;
  std::array<int, kNumShapeClasses> per_class{};
  int total = 0;
  for (int idx = 0; idx < 1000; ++idx)
    for (const auto& g : generate_scene(spec, idx).objects) ++per_class[g.class_id - 1], ++total;
  for (int c = 0; c < kNumShapeClasses; ++c)
    EXPECT_TRUE(within_3_sigma(per_class[c], total, 1.0 / kNumShapeClasses)) << c << ": " << per_class[c];
}

TEST(SynthData, SmallObjectsWellRepresentedInTestSplit) {
  const ExperimentConfig defaults;
  const Dataset test = generate_dataset(defaults.data, defaults.train.train_scenes, defaults.train.test_scenes);
  int small = 0, total = 0;
  for (const auto& g : test.ground_truth()) small += g.box.width() < kSizeBandEdges[1], ++total;
  EXPECT_GE(small, 0.15 * total) << small << " of " << total;
}

TEST(SynthData, DatasetMatchesSceneGenerator) {
  SceneSpec spec;
  const Dataset d = generate_dataset(spec, 10, 20);
  ASSERT_EQ(d.size(), 20);
  for (int i = 0; i < 20; ++i) {
    const Scene s = generate_scene(spec, 10 + i);
    EXPECT_EQ(d.images[i], s.rgb);
    ASSERT_EQ(d.objects[i].size(), s.objects.size());
    for (const auto& g : d.objects[i]) EXPECT_EQ(g.image_id, i);
  }
  const int idx[] = {3, 0};
  const Tensor<float> t = d.batch(idx);
  EXPECT_EQ(t.shape(), (Shape4{2, 3, 64, 64}));
  EXPECT_FLOAT_EQ(t.at(0, 1, 5, 7), d.images[3][(5 * 64 + 7) * 3 + 1] / 255.0f - 0.5f);
}

TEST(SynthData, WriteReadRoundTrip) {
  const fs::path dir = scratch_dir("roundtrip");
  SceneSpec spec;
  const Dataset d = generate_dataset(spec, 0, 12);
  write_dataset(d, dir);
  std::ifstream manifest(dir / "manifest.txt");
  int lines = 0;
  for (std::string l; std::getline(manifest, l);) ++lines;
  EXPECT_EQ(lines, 12);
  const Dataset r = read_dataset(dir);
  ASSERT_EQ(r.size(), 12);
  EXPECT_EQ(r.image_size, 64);
  EXPECT_EQ(r.names, d.names);
  EXPECT_EQ(r.images, d.images);
  for (int i = 0; i < 12; ++i) {
    ASSERT_EQ(r.objects[i].size(), d.objects[i].size());
    for (std::size_t k = 0; k < d.objects[i].size(); ++k) {
      EXPECT_EQ(r.objects[i][k].class_id, d.objects[i][k].class_id);
      EXPECT_EQ(r.objects[i][k].box.x_min, d.objects[i][k].box.x_min);
      EXPECT_EQ(r.objects[i][k].box.y_min, d.objects[i][k].box.y_min);
      EXPECT_EQ(r.objects[i][k].box.x_max, d.objects[i][k].box.x_max);
      EXPECT_EQ(r.objects[i][k].box.y_max, d.objects[i][k].box.y_max);
    }
  }
  fs::remove_all(dir);
}

TEST(SynthData, CorruptAnnotationNamesLine) {
  const fs::path dir = scratch_dir("corrupt");
  write_dataset(generate_dataset(SceneSpec{}, 0, 3), dir);
  {
    std::ofstream f(dir / "annotations.txt", std::ios::app);
    f << "1,2,0.1,oops,0.3,0.4\n";
  }
  std::ifstream in(dir / "annotations.txt");
  int lines = 0;
  for (std::string l; std::getline(in, l);) ++lines;
  try {
    read_dataset(dir);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line " + std::to_string(lines)), std::string::npos) << e.what();
  }
  fs::remove_all(dir);
}

TEST(SynthData, IoErrorsCarryPath) {
  const fs::path dir = scratch_dir("missing");
  try {
    read_dataset(dir);
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find(dir.string()), std::string::npos);
  }
}

TEST(SynthData, PpmRejectsBadHeaders) {
  const fs::path dir = scratch_dir("ppm");
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "a.ppm", std::ios::binary);
    f << "P3\n2 2\n255\n";
  }
  int w, h;
  EXPECT_THROW(read_ppm(dir / "a.ppm", w, h), ParseError);
  {
    std::ofstream f(dir / "b.ppm", std::ios::binary);
    f << "P6\n# comment\n2 2\n255\nabc";
  }
  EXPECT_THROW(read_ppm(dir / "b.ppm", w, h), ParseError);
  const std::vector<std::uint8_t> px(2 * 3 * 3, 7);
  write_ppm(dir / "c.ppm", 2, 3, px);
  EXPECT_EQ(read_ppm(dir / "c.ppm", w, h), px);
  EXPECT_EQ(w, 2);
  EXPECT_EQ(h, 3);
  fs::remove_all(dir);
}

TEST(SynthData, SpecValidation) {
  SceneSpec s;
  s.max_objects = -1;
  EXPECT_THROW(s.validate(), ConfigError);
  s = {};
  s.size_mix = {0, 0, 0};
  EXPECT_THROW(s.validate(), ConfigError);
  s = {};
  s.max_retries = 0;
  EXPECT_THROW(generate_scene(s, 0), ConfigError);
}

TEST(KeyedPermutation, DeterministicPermutation) {
  const auto a = keyed_permutation(100, 5, 0), b = keyed_permutation(100, 5, 0);
  EXPECT_EQ(a, b);
  EXPECT_EQ(std::set<int>(a.begin(), a.end()).size(), 100u);
  EXPECT_NE(keyed_permutation(100, 5, 1), a);
  EXPECT_NE(keyed_permutation(100, 6, 0), a);
}

TEST(KeyedPermutation, UniformIntegersInRange) {
  Rng rng(9);
  std::array<int, 7> hist{};
  for (int i = 0; i < 70000; ++i) ++hist[rng.below(7)];
  for (int h : hist) EXPECT_TRUE(within_3_sigma(h, 70000, 1.0 / 7));
}

}  // namespace
}  // namespace stairnet
