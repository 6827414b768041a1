#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "probsal/consensus.hpp"
#include "probsal/dataset.hpp"
#include "probsal/labelgen.hpp"
#include "probsal/model.hpp"

namespace probsal {

enum class AnnotationStrategy { Uniform, GtOnly, RoundRobin };
std::string to_string(AnnotationStrategy s);
AnnotationStrategy annotation_strategy_from_string(const std::string& s);

struct TrainConfig {
  double lr = 1e-4;
  double lr_decay_per_epoch = 0.9;
  int epochs = 30;
  int batch = 6;
  int image_size = 352;
  double momentum = 0.9;  // Adam first-moment coefficient
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_init_std = 0.01;
  int K = 8;
  int M = 32;
  std::uint64_t seed = 0;
  // 0 = run all epochs; otherwise stop after this many optimizer steps.
  int max_steps = 0;
  EncoderVariant encoder = EncoderVariant::Tiny;
  AnnotationStrategy annotations = AnnotationStrategy::Uniform;
  Reduction smooth_reduction = Reduction::Mean;
  LossWeights loss;
  VariantConfig variant;
  std::string manifest;  // training manifest path (config-file convenience)
  std::string out_dir;   // log + checkpoint directory; empty = none

  // 64×64 tiny encoder with a faster, gentler schedule for desk-scale runs.
  static TrainConfig tiny();
};

void validate(const TrainConfig& c);
ModelConfig model_config(const TrainConfig& c);

// Flat `key = value` file; keys mirror TrainConfig field names. `#` and `;`
// start comments, string values may be quoted.
TrainConfig parse_config(const std::string& text, TrainConfig base = TrainConfig::tiny());
TrainConfig load_config(const std::filesystem::path& path);
std::string dump_config(const TrainConfig& c);
// Applies one `key=value` override (as from the command line).
void apply_override(TrainConfig& c, const std::string& key, const std::string& value);

// Learning rate used during epoch e (1-based): lr * decay^(e-1), accumulated
// by repeated multiplication.
double lr_at_epoch(const TrainConfig& c, int epoch);
std::vector<double> lr_schedule(const TrainConfig& c, int epochs);

class Adam {
 public:
  Adam(ParamList params, double beta1, double beta2, double eps);
  void step(double lr);
  long steps() const { return t_; }

 private:
  ParamList params_;
  std::vector<Tensor> m_, v_;
  double beta1_, beta2_, eps_;
  long t_ = 0;
};

struct EpochLog {
  int epoch = 0;
  int steps = 0;
  double lr = 0;
  double loss = 0;
  double cvae = 0;
  double depth = 0;
  double smooth = 0;
};

struct Checkpoint {
  TrainConfig config;
  std::shared_ptr<Model> model;
  int epoch = 0;
  std::string rng_state;
  double probe_loss = 0.0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<double> step_losses;
  std::vector<EpochLog> epochs;
  double final_loss = 0.0;  // last step's loss
};

using EpochCallback = std::function<void(const EpochLog&)>;

Checkpoint init_checkpoint(const TrainConfig& c);

// Trains on already-loaded samples (resized to config.image_size).
TrainResult train(const std::vector<RgbdSample>& samples, const TrainConfig& c, const EpochCallback& on_epoch = {});
// Loads the manifest and trains. Writes log.jsonl and checkpoint.bin into
// config.out_dir when set.
TrainResult train(const DatasetManifest& m, const TrainConfig& c, const EpochCallback& on_epoch = {});

// Total loss of a fixed synthetic probe scene with fixed latent noise.
double probe_loss(const Model& model, const TrainConfig& c);

struct SampleOptions {
  double noise_scale = 1.0;  // multiplies the latent noise maps; 0 collapses sampling
};

// Per-variant test-time sampling: C predictions in [0,1] plus consensus.
PredictionSet sample_predictions(const Model& model, const RgbdSample& sample, int C, Rng& rng,
                                 const SampleOptions& opt = {});
PredictionSet sample_predictions(const Checkpoint& ckpt, const RgbdSample& sample, int C, Rng& rng,
                                 const SampleOptions& opt = {});

// Refined depth for one sample (raw depth for the no-depthcorr variant).
Tensor refined_depth(const Model& model, const RgbdSample& sample);

inline constexpr std::uint32_t kCheckpointVersion = 1;
void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Oracle backed by a trained model: the prior mean prediction (no noise).
class ModelOracle final : public SaliencyOracle {
 public:
  explicit ModelOracle(Checkpoint ckpt) : ckpt_(std::move(ckpt)) {}
  std::string kind() const override { return "trained_model"; }
  Tensor predict(const RgbdSample& base, const Tensor& rgb, int round) const override;

 private:
  Checkpoint ckpt_;
};

// "synthetic", "files:DIR" or "model:CKPT".
std::unique_ptr<SaliencyOracle> make_oracle(const std::string& spec, const Rgb& mean_rgb);

}  // namespace probsal
