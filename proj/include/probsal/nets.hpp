#pragma once

#include <array>
#include <string>
#include <vector>

#include "probsal/layers.hpp"

namespace probsal {

enum class EncoderVariant { Tiny, Vgg16Shape };
std::string to_string(EncoderVariant v);
EncoderVariant encoder_variant_from_string(const std::string& s);

struct EncoderConfig {
  EncoderVariant variant = EncoderVariant::Tiny;
  std::array<int, 5> stage_channels{16, 32, 64, 64, 64};
  std::array<int, 5> convs_per_stage{1, 1, 1, 1, 1};
  std::vector<int> daspp_dilations{3, 6, 12, 18};
  int daspp_growth = 8;
  int daspp_out = 16;
  double leaky_slope = 0.1;

  static EncoderConfig tiny();
  // VGG16 channel and conv plan, no pretrained weights.
  static EncoderConfig vgg16_shape();
};

void validate(const EncoderConfig& c);

// Test-time dropout hook; inactive when rate == 0 or rng is null.
struct DropoutCtx {
  double rate = 0.0;
  Rng* rng = nullptr;

  ag::Var operator()(const ag::Var& x) const;
};

// Five conv stages with 2× max pooling between them. Stage s runs at H / 2^s.
class Encoder {
 public:
  Encoder() = default;
  Encoder(const EncoderConfig& cfg, int in_channels);

  std::vector<ag::Var> operator()(const ag::Var& x, const DropoutCtx& drop = {}) const;
  void init(InitScheme scheme, double std, Rng& rng);
  void collect(ParamList& out, const std::string& prefix) const;

 private:
  EncoderConfig cfg_;
  std::array<std::vector<Conv2d>, 5> stages_;
};

// Dense atrous pyramid: each branch sees the input plus all earlier branch
// outputs, then a 1×1 conv fuses everything.
class DenseAspp {
 public:
  DenseAspp() = default;
  DenseAspp(int in, const EncoderConfig& cfg);

  ag::Var operator()(const ag::Var& x, const DropoutCtx& drop = {}) const;
  void init(double std, Rng& rng);
  void collect(ParamList& out, const std::string& prefix) const;

 private:
  double slope_ = 0.1;
  std::vector<Conv2d> reduce_;
  std::vector<Conv2d> atrous_;
  Conv2d fuse_;
};

// Inputs must be square or rectangular multiples of 8, at least 16 per side.
void check_input_size(int h, int w, const char* who);

// RGB + refined depth -> deterministic feature (N, M, H/8, W/8).
class SaliencyNet {
 public:
  SaliencyNet() = default;
  SaliencyNet(const EncoderConfig& cfg, int M);

  ag::Var operator()(const ag::Var& rgb, const ag::Var& depth, const DropoutCtx& drop = {}) const;
  void init(double new_layer_std, Rng& rng);
  void collect(ParamList& out, const std::string& prefix) const;
  int M() const { return M_; }

 private:
  int M_ = 32;
  Encoder encoder_;
  std::array<DenseAspp, 5> pyramids_;
  Conv2d fuse_;
};

// RGB + raw depth -> refined depth in [0,1] at input resolution. The decoder
// has four convs with bilinear upsampling and encoder skips at H/8..H/2.
class DepthCorrectionNet {
 public:
  DepthCorrectionNet() = default;
  explicit DepthCorrectionNet(const EncoderConfig& cfg);

  ag::Var operator()(const ag::Var& rgb, const ag::Var& depth) const;
  void init(double new_layer_std, Rng& rng);
  void collect(ParamList& out, const std::string& prefix) const;

 private:
  double slope_ = 0.1;
  Encoder encoder_;
  std::array<Conv2d, 4> decoder_;
};

// Channel permutation of the concatenated (S^d, S^s) features.
struct MixPermutation {
  std::vector<int> r;  // out channel i takes in channel r[i]

  static MixPermutation identity(int n);
  static MixPermutation random(int n, Rng& rng);
  MixPermutation inverse() const;
  bool valid() const;
};

// 1×1 convs to K, K/2 and 1 channels on the mixed features.
class PredictionNet {
 public:
  PredictionNet() = default;
  PredictionNet(int M, int K);

  // Returns (N,1,out_h,out_w) logits.
  ag::Var operator()(const ag::Var& sd, const ag::Var& ss, const MixPermutation& r, int out_h, int out_w,
                     const DropoutCtx& drop = {}) const;
  void init(double std, Rng& rng);
  void collect(ParamList& out, const std::string& prefix) const;
  Conv2d& first() { return c1_; }

 private:
  int M_ = 32, K_ = 8;
  double slope_ = 0.1;
  Conv2d c1_, c2_, c3_;
};

}  // namespace probsal
