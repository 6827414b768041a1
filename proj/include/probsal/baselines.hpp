#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "probsal/metrics.hpp"
#include "probsal/pipeline.hpp"

namespace probsal {

// VAE mode: the X-conditioned latent is pulled towards N(0, I).
ag::Var vae_kl(const GaussianLatent& prior);

struct MHeadLoss {
  ag::Var loss;  // BCE of the closest head; gradient reaches only that head
  int winner = 0;
  std::vector<double> per_head;
};

MHeadLoss mhead_loss(const std::vector<ag::Var>& head_logits, const ag::Var& y);

// n forwards with dropout active in the saliency encoder, pyramids and head.
PredictionSet mcdropout_sample(const Model& model, const RgbdSample& sample, int n, double rate, Rng& rng);
PredictionSet mcdropout_sample(const Checkpoint& ckpt, const RgbdSample& sample, int n, double rate, Rng& rng);

// One `ablate --variant` value: vae | mhead | mcdropout | no-depthcorr | cvae | K=N.
struct AblationSpec {
  std::string label;
  Variant variant = Variant::Cvae;
  int K = 0;  // 0 = keep the configured K
};

AblationSpec parse_ablation(const std::string& s);
TrainConfig apply_ablation(TrainConfig c, const AblationSpec& a);

struct AblationResult {
  AblationSpec spec;
  TrainResult training;
  MetricReport report;            // consensus maps against annotation 0
  double mean_pixel_variance = 0;  // across the C samples, averaged over images
};

// Trains the variant, samples C predictions per test image, scores the
// consensus maps. With out_dir set, writes pred/{id}.png, report.json and the
// training log/checkpoint there.
AblationResult run_ablation(const DatasetManifest& train_set, const DatasetManifest& test_set, TrainConfig c,
                            const AblationSpec& a, int C, const std::filesystem::path& out_dir = {});

}  // namespace probsal
