#pragma once
// Synthetic detection scenes: disks, squares, triangles and rings over a noisy
// background, with a controlled mix of small, medium and large objects.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "stairnet/tensor.hpp"
#include "stairnet/voc_eval.hpp"

namespace stairnet {

/// Foreground classes are 1..4; label 0 is background.
inline constexpr int kNumShapeClasses = 4;
enum class ShapeKind { kDisk = 1, kSquare = 2, kTriangle = 3, kRing = 4 };
const char* shape_name(int class_id);

/// Normalized side-length bands: small [0.05, 0.12), medium [0.12, 0.3), large [0.3, 0.6].
inline constexpr std::array<double, 4> kSizeBandEdges{0.05, 0.12, 0.3, 0.6};
int size_band(double side);

struct SceneSpec {
  int image_size = 64;
  int min_objects = 1;
  int max_objects = 4;
  /// Probability of each size band.
  std::array<double, 3> size_mix{0.35, 0.4, 0.25};
  /// Rings are skewed towards large sizes.
  std::array<double, 3> ring_size_mix{0.1, 0.3, 0.6};
  double noise = 0.06;         // per-pixel uniform amplitude
  /// Class-tied base colors plus jitter; otherwise every instance draws a random
  /// color that contrasts with the background, so only shape identifies the class.
  bool class_colors = false;
  double color_jitter = 0.12;  // per-instance, per-channel, class-tied colors only
  double max_iou = 0.3;
  int max_retries = 50;
  std::uint64_t seed = 1;

  void validate() const;
  const std::array<double, 3>& mixture_for(int class_id) const;
};

struct Scene {
  int size = 0;
  std::vector<std::uint8_t> rgb;     // size x size x 3, row-major
  std::vector<GroundTruth> objects;  // image_id left at 0
};

/// Pure function of (spec, index). Objects that cannot be placed within
/// max_retries are dropped.
Scene generate_scene(const SceneSpec& spec, int index);

struct Dataset {
  int image_size = 0;
  std::vector<std::string> names;
  std::vector<std::vector<std::uint8_t>> images;
  std::vector<std::vector<GroundTruth>> objects;  // image_id equals position

  int size() const { return static_cast<int>(images.size()); }
  /// Images as NCHW floats, value/255 - 0.5.
  Tensor<float> batch(std::span<const int> indices) const;
  /// All annotations in image order.
  std::vector<GroundTruth> ground_truth() const;
  std::vector<GroundTruth> ground_truth(std::span<const int> indices) const;
};

/// Scenes first, first+1, ..., first+count-1; image ids restart at 0.
Dataset generate_dataset(const SceneSpec& spec, int first, int count);

/// manifest.txt, images/*.ppm and annotations.txt under `dir`.
void write_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

void write_ppm(const std::filesystem::path& path, int width, int height, std::span<const std::uint8_t> rgb);
/// Returns rgb bytes; width and height through the out-params.
std::vector<std::uint8_t> read_ppm(const std::filesystem::path& path, int& width, int& height);

}  // namespace stairnet
