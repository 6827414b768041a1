#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "probsal/dataset.hpp"

namespace probsal {

// Stand-in for an external RGB saliency model queried on partially hidden
// images. Implementations must not expose shared mutable state to callers.
class SaliencyOracle {
 public:
  virtual ~SaliencyOracle() = default;
  virtual std::string kind() const = 0;
  // Gray map (1,1,H,W) in [0,1] for `rgb`, the base sample's image with some
  // regions hidden; `round` counts from 1.
  virtual Tensor predict(const RgbdSample& base, const Tensor& rgb, int round) const = 0;
};

// Uses the scene's saliency-ranked visible object masks: answers with the
// highest-ranked object that is not mostly hidden, or an empty map.
class SyntheticRankOracle final : public SaliencyOracle {
 public:
  explicit SyntheticRankOracle(Rgb mean_rgb) : mean_rgb_(mean_rgb) {}
  std::string kind() const override { return "synthetic_rank"; }
  Tensor predict(const RgbdSample& base, const Tensor& rgb, int round) const override;

 private:
  Rgb mean_rgb_;
};

// Precomputed predictions stored as DIR/{id}_{round}.png.
class FilePredictionOracle final : public SaliencyOracle {
 public:
  explicit FilePredictionOracle(std::filesystem::path dir) : dir_(std::move(dir)) {}
  std::string kind() const override { return "file_predictions"; }
  Tensor predict(const RgbdSample& base, const Tensor& rgb, int round) const override;

 private:
  std::filesystem::path dir_;
};

Tensor hide_region(const Tensor& rgb, const Tensor& mask, const Rgb& mean_rgb);

struct AugmentedSample {
  RgbdSample base;
  std::vector<Tensor> hidden_rgbs;  // image handed to the oracle in each round
  std::vector<Tensor> annotations;  // provided GT followed by one map per round
};

AugmentedSample augment(const RgbdSample& sample, const SaliencyOracle& oracle, const Rgb& mean_rgb, int rounds = 3);

// Augments every entry and writes a manifest at out_manifest whose entries
// carry rounds + 1 annotation paths. Generated maps go under
// <out dir>/auged/; other paths are rewritten relative to the new root.
DatasetManifest augment_manifest(const DatasetManifest& in, const SaliencyOracle& oracle, int rounds,
                                 const std::filesystem::path& out_manifest);

}  // namespace probsal
