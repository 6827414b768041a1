#pragma once

#include <array>
#include <string>
#include <vector>

#include "probsal/dataset.hpp"
#include "probsal/latent.hpp"
#include "probsal/losses.hpp"
#include "probsal/nets.hpp"

namespace probsal {

enum class Variant { Cvae, Vae, MHead, McDropout, NoDepthCorr };
std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

struct VariantConfig {
  Variant variant = Variant::Cvae;
  int heads = 5;              // M-head decoders
  double dropout_rate = 0.1;  // MC-dropout rate
  int dropout_samples = 5;    // MC-dropout forwards at test time
};

void validate(const VariantConfig& v);

struct ModelConfig {
  EncoderConfig encoder = EncoderConfig::tiny();
  int K = 8;
  int M = 32;
  std::array<int, 5> latent_channels{16, 32, 64, 64, 64};
  double init_std = 0.01;  // N(0, std) for every layer not in an encoder
  VariantConfig variant;
};

void validate(const ModelConfig& c);

// One preprocessed input: tensors are (1,C,H,W).
struct ModelInput {
  ag::Var rgb;
  ag::Var depth;
  ag::Var ig;  // linearized intensity
};

ModelInput make_input(const RgbdSample& s);

// Everything one training forward produces.
struct ForwardResult {
  ag::Var dprime;
  ag::Var sd;
  std::vector<ag::Var> logits;  // one per head
  GaussianLatent posterior;     // source of S^s during training (null for deterministic variants)
  GaussianLatent prior;         // KL target
  int winner = 0;               // M-head: head with the smallest reconstruction loss
  LossTerms terms;
  ag::Var total;
};

// The full network set. Parameters are shared_ptr-backed; copies of a Model
// share weights.
class Model {
 public:
  Model() = default;
  Model(ModelConfig cfg, Rng& rng);

  const ModelConfig& config() const { return cfg_; }
  ParamList params() const;

  ag::Var refine_depth(const ModelInput& in) const;
  ag::Var features(const ModelInput& in, const ag::Var& dprime, const DropoutCtx& drop = {}) const;
  GaussianLatent prior(const ModelInput& in) const;
  GaussianLatent posterior(const ModelInput& in, const ag::Var& y) const;
  ag::Var predict(const ag::Var& sd, const ag::Var& ss, int head, int out_h, int out_w,
                  const DropoutCtx& drop = {}) const;
  // S^s stand-in for variants without a latent path.
  ag::Var zero_latent_map(const ag::Var& sd) const;

  // Training forward + loss on one sample and one annotation.
  ForwardResult forward_train(const ModelInput& in, const ag::Var& y, const LossWeights& w, Reduction smooth_reduction,
                              Rng& rng) const;

  MixPermutation& permutation() { return r_; }
  const MixPermutation& permutation() const { return r_; }
  int heads() const { return int(heads_.size()); }
  bool uses_depth_correction() const { return cfg_.variant.variant != Variant::NoDepthCorr; }
  bool has_latent() const;

  // Copies values of every parameter from `other` (same config).
  void load_values(const Model& other);

 private:
  ModelConfig cfg_;
  DepthCorrectionNet depth_net_;
  SaliencyNet saliency_;
  LatentNet prior_net_;
  LatentNet posterior_net_;
  std::vector<PredictionNet> heads_;
  MixPermutation r_;
};

}  // namespace probsal
