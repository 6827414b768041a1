#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "probsal/tensor.hpp"

namespace probsal {

using Rgb = std::array<double, 3>;

// One RGB-D record. rgb is (1,3,H,W), depth and every annotation (1,1,H,W).
// annotations[0] is the canonical ground truth.
struct RgbdSample {
  std::string id;
  Tensor rgb;
  Tensor depth;
  std::vector<Tensor> annotations;
  std::optional<Tensor> clean_depth;
  // Visible object masks in saliency-rank order (synthetic scenes only).
  std::vector<Tensor> object_masks;

  int height() const { return rgb.h(); }
  int width() const { return rgb.w(); }
};

// Throws InvalidArgument naming the violated invariant.
void validate(const RgbdSample& s);

enum class Split { Train, Test };
std::string to_string(Split s);
Split split_from_string(const std::string& s);

// Polarity of stored depth. Samples are always handed out as near = large.
enum class DepthPolarity { NearLarge, NearSmall };

struct ManifestEntry {
  std::string id;
  std::string rgb;
  std::string depth;
  std::vector<std::string> annotations;
  std::optional<std::string> clean_depth;
  std::vector<std::string> object_masks;
  int height = 0;  // 0 = not recorded
  int width = 0;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<ManifestEntry> entries;
  Split split = Split::Train;
  Rgb mean_rgb{0.5, 0.5, 0.5};
  DepthPolarity polarity = DepthPolarity::NearLarge;

  const ManifestEntry& find(const std::string& id) const;
  std::filesystem::path resolve(const std::string& rel) const { return root / rel; }
};

// Gray intensity after removing the sRGB gamma, (1,1,H,W) in [0,1].
struct IntensityImage {
  Tensor ig;
};

// Inverse sRGB gamma of one channel value.
double linearize_channel(double c);
IntensityImage to_intensity(const Tensor& rgb);

// JSON-lines manifest: an optional first line {"meta": {...}} carrying split,
// mean_rgb and depth polarity, then one object per sample. Paths are relative
// to the manifest's directory.
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);
// Checks ids are unique, files exist and mean_rgb is in range.
void validate(const DatasetManifest& m);

// Reads one sample; resize_to > 0 rescales every map to resize_to × resize_to
// (annotations and masks re-binarized at 0.5).
RgbdSample load_sample(const DatasetManifest& m, const ManifestEntry& e, int resize_to = 0);
std::vector<RgbdSample> load_all(const DatasetManifest& m, int resize_to = 0);

// Writes the sample's maps under root as 8-bit PNGs and returns the entry.
ManifestEntry save_sample(const RgbdSample& s, const std::filesystem::path& root);

// Channel means over the given samples.
Rgb mean_rgb_of(const std::vector<RgbdSample>& samples);

// Builds a manifest for the RGB/ depth/ GT/ folder convention used by public
// RGB-D saliency benchmarks, matching files by stem.
DatasetManifest scan_benchmark_layout(const std::filesystem::path& root, Split split,
                                      DepthPolarity polarity = DepthPolarity::NearLarge);

// ---- synthetic scenes ------------------------------------------------------

struct SynthConfig {
  std::uint64_t seed = 0;
  int count = 10;
  int size = 64;
  int min_objects = 1;
  int max_objects = 3;
  double depth_noise_std = 0.05;
  // Number of top-ranked objects forming the canonical GT.
  int gt_objects = 1;
  // Dropout holes per image are drawn from [0, max_holes]; only when noise > 0.
  int max_holes = 2;
  std::string id_prefix = "syn";
  Split split = Split::Train;
  // Index offset so disjoint train/test sets can come from one seed.
  int first_index = 0;
};

void validate(const SynthConfig& c);

enum class ShapeKind { Ellipse, Rectangle, Triangle };

struct SceneObject {
  ShapeKind kind = ShapeKind::Ellipse;
  double cx = 0, cy = 0;
  double rx = 1, ry = 1;
  double angle = 0;
  Rgb color{0, 0, 0};
  double depth = 0.5;  // near = large
};

// Unquantized scene with everything the generator knows.
struct Scene {
  RgbdSample sample;
  std::vector<SceneObject> objects;  // creation order
  std::vector<Tensor> coverage;      // anti-aliased coverage per object
  std::vector<Tensor> visible;       // binary visible mask per object
  std::vector<double> scores;        // saliency score per object
  std::vector<int> rank;             // object indices, most salient first
  Tensor background_depth;
};

Scene render_scene(const SynthConfig& c, int index);

// Renders count scenes, writes them under root (rgb/ depth/ gt/ clean_depth/
// masks/ + manifest.jsonl) and returns the manifest.
DatasetManifest generate_synthetic(const SynthConfig& c, const std::filesystem::path& root);

}  // namespace probsal
