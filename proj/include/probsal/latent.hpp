#pragma once

#include <array>
#include <string>

#include "probsal/layers.hpp"

namespace probsal {

// Diagonal Gaussian over K latent dimensions; mu and logvar are (N,K,1,1).
struct GaussianLatent {
  ag::Var mu;
  ag::Var logvar;

  int K() const { return mu->shape().c; }
  int batch() const { return mu->shape().n; }
  static GaussianLatent standard_normal(int n, int K);
  static GaussianLatent fixed(Tensor mu, Tensor logvar);
};

// Checks sigma = exp(logvar / 2) is positive and finite.
void validate(const GaussianLatent& g);

struct LatentNetConfig {
  int K = 8;
  std::array<int, 5> conv_channels{16, 32, 64, 64, 64};
  int input_channels = 4;  // 4 = RGB+D (prior), 5 = RGB+D+GT (posterior)
  double leaky_slope = 0.1;
};

void validate(const LatentNetConfig& c);

// Five stride-2 conv stages, a 1×1 conv to 4K channels, global average
// pooling and a final affine map to 2K values read as (mu, logvar).
class LatentNet {
 public:
  LatentNet() = default;
  explicit LatentNet(LatentNetConfig cfg);

  GaussianLatent operator()(const ag::Var& x) const;
  void init(double std, Rng& rng);
  void collect(ParamList& out, const std::string& prefix) const;
  const LatentNetConfig& config() const { return cfg_; }

  // Smallest accepted spatial extent.
  static constexpr int kMinSize = 16;

 private:
  LatentNetConfig cfg_;
  std::array<Conv2d, 5> stages_;
  Conv2d wide_;
  Conv2d head_;
};

// KL(q || p), summed over K and averaged over the batch.
ag::Var kl_divergence(const GaussianLatent& q, const GaussianLatent& p);

// Noise map for expand(): i.i.d. standard normal, shape (N,K,h,w).
Tensor draw_noise(int n, int K, int h, int w, Rng& rng);
// Channel k of the result is sigma_k * eps_k + mu_k with eps_k an h×w noise map.
ag::Var expand(const GaussianLatent& latent, int h, int w, Rng& rng);
ag::Var expand(const GaussianLatent& latent, const Tensor& noise);

}  // namespace probsal
