#include "probsal/nets.hpp"

#include <algorithm>
#include <numeric>

#include "probsal/error.hpp"

namespace probsal {

std::string to_string(EncoderVariant v) { return v == EncoderVariant::Tiny ? "tiny" : "vgg16_shape"; }

EncoderVariant encoder_variant_from_string(const std::string& s) {
  if (s == "tiny") return EncoderVariant::Tiny;
  if (s == "vgg16_shape" || s == "vgg16") return EncoderVariant::Vgg16Shape;
  throw InvalidArgument("unknown encoder variant '" + s + "'");
}

EncoderConfig EncoderConfig::tiny() { return {}; }

EncoderConfig EncoderConfig::vgg16_shape() {
  EncoderConfig c;
  c.variant = EncoderVariant::Vgg16Shape;
  c.stage_channels = {64, 128, 256, 512, 512};
  c.convs_per_stage = {2, 2, 3, 3, 3};
  c.daspp_growth = 32;
  c.daspp_out = 64;
  return c;
}

void validate(const EncoderConfig& c) {
  for (int s = 0; s < 5; ++s) {
    require(c.stage_channels[s] >= 1, "encoder stage channels must be positive");
    require(c.convs_per_stage[s] >= 1, "encoder needs at least one conv per stage");
  }
  require(!c.daspp_dilations.empty(), "dense pyramid needs at least one dilation");
  for (int d : c.daspp_dilations) require(d >= 1, "dilations must be >= 1");
  require(c.daspp_growth >= 1 && c.daspp_out >= 1, "dense pyramid widths must be positive");
}

ag::Var DropoutCtx::operator()(const ag::Var& x) const {
  if (rate <= 0.0 || rng == nullptr) return x;
  return ag::dropout(x, rate, *rng);
}

void check_input_size(int h, int w, const char* who) {
  require(h % 8 == 0 && w % 8 == 0,
          std::string(who) + ": input " + std::to_string(h) + "x" + std::to_string(w) + " is not divisible by 8");
  require(h >= 16 && w >= 16, std::string(who) + ": input must be at least 16x16");
}

// ---- Encoder ------------------------------------------------------------

Encoder::Encoder(const EncoderConfig& cfg, int in_channels) : cfg_(cfg) {
  validate(cfg_);
  int in = in_channels;
  for (int s = 0; s < 5; ++s) {
    for (int k = 0; k < cfg_.convs_per_stage[s]; ++k) {
      stages_[s].emplace_back(ConvSpec{.in = in, .out = cfg_.stage_channels[s]});
      in = cfg_.stage_channels[s];
    }
  }
}

std::vector<ag::Var> Encoder::operator()(const ag::Var& x, const DropoutCtx& drop) const {
  std::vector<ag::Var> feats;
  ag::Var h = x;
  for (int s = 0; s < 5; ++s) {
    if (s > 0) h = ag::max_pool2(h);
    for (const auto& conv : stages_[s]) h = ag::leaky_relu(conv(h), cfg_.leaky_slope);
    h = drop(h);
    feats.push_back(h);
  }
  return feats;
}

void Encoder::init(InitScheme scheme, double std, Rng& rng) {
  for (auto& stage : stages_) {
    for (auto& c : stage) c.init(scheme, std, rng);
  }
}

void Encoder::collect(ParamList& out, const std::string& prefix) const {
  for (int s = 0; s < 5; ++s) {
    for (std::size_t k = 0; k < stages_[s].size(); ++k) {
      stages_[s][k].collect(out, prefix + ".stage" + std::to_string(s) + ".conv" + std::to_string(k));
    }
  }
}

// ---- DenseAspp ----------------------------------------------------------

DenseAspp::DenseAspp(int in, const EncoderConfig& cfg) : slope_(cfg.leaky_slope) {
  int width = in;
  for (int d : cfg.daspp_dilations) {
    reduce_.emplace_back(ConvSpec{.in = width, .out = cfg.daspp_growth, .kernel = 1});
    atrous_.emplace_back(ConvSpec{.in = cfg.daspp_growth, .out = cfg.daspp_growth, .kernel = 3, .dilation = d});
    width += cfg.daspp_growth;
  }
  fuse_ = Conv2d({.in = width, .out = cfg.daspp_out, .kernel = 1});
}

ag::Var DenseAspp::operator()(const ag::Var& x, const DropoutCtx& drop) const {
  std::vector<ag::Var> parts{x};
  for (std::size_t i = 0; i < atrous_.size(); ++i) {
    ag::Var in = parts.size() == 1 ? x : ag::concat_channels(parts);
    ag::Var r = ag::leaky_relu(reduce_[i](in), slope_);
    parts.push_back(ag::leaky_relu(atrous_[i](r), slope_));
  }
  return drop(ag::leaky_relu(fuse_(ag::concat_channels(parts)), slope_));
}

void DenseAspp::init(double std, Rng& rng) {
  for (auto& c : reduce_) c.init(InitScheme::Gaussian, std, rng);
  for (auto& c : atrous_) c.init(InitScheme::Gaussian, std, rng);
  fuse_.init(InitScheme::Gaussian, std, rng);
}

void DenseAspp::collect(ParamList& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < atrous_.size(); ++i) {
    reduce_[i].collect(out, prefix + ".reduce" + std::to_string(i));
    atrous_[i].collect(out, prefix + ".atrous" + std::to_string(i));
  }
  fuse_.collect(out, prefix + ".fuse");
}

// ---- SaliencyNet --------------------------------------------------------

SaliencyNet::SaliencyNet(const EncoderConfig& cfg, int M) : M_(M), encoder_(cfg, 4) {
  require(M >= 1, "M must be >= 1");
  for (int s = 0; s < 5; ++s) pyramids_[s] = DenseAspp(cfg.stage_channels[s], cfg);
  fuse_ = Conv2d({.in = 5 * cfg.daspp_out, .out = M, .kernel = 1});
}

ag::Var SaliencyNet::operator()(const ag::Var& rgb, const ag::Var& depth, const DropoutCtx& drop) const {
  const Shape s = rgb->shape();
  require(s.c == 3 && depth->shape().c == 1, "SaliencyNet expects RGB and one depth channel");
  require(s.h == depth->shape().h && s.w == depth->shape().w, "SaliencyNet: rgb/depth size mismatch");
  check_input_size(s.h, s.w, "SaliencyNet");
  const auto feats = encoder_(ag::concat_channels({rgb, depth}), drop);
  const int h = s.h / 8, w = s.w / 8;
  std::vector<ag::Var> parts;
  for (int i = 0; i < 5; ++i) parts.push_back(ag::resize_bilinear(pyramids_[i](feats[i], drop), h, w));
  return fuse_(ag::concat_channels(parts));
}

void SaliencyNet::init(double new_layer_std, Rng& rng) {
  encoder_.init(InitScheme::He, 0.0, rng);
  for (auto& p : pyramids_) p.init(new_layer_std, rng);
  fuse_.init(InitScheme::Gaussian, new_layer_std, rng);
}

void SaliencyNet::collect(ParamList& out, const std::string& prefix) const {
  encoder_.collect(out, prefix + ".encoder");
  for (int i = 0; i < 5; ++i) pyramids_[i].collect(out, prefix + ".daspp" + std::to_string(i));
  fuse_.collect(out, prefix + ".fuse");
}

// ---- DepthCorrectionNet -------------------------------------------------

DepthCorrectionNet::DepthCorrectionNet(const EncoderConfig& cfg) : slope_(cfg.leaky_slope), encoder_(cfg, 4) {
  const auto& ch = cfg.stage_channels;
  const int w0 = std::max(8, ch[1] / 2);
  // Each conv sees the upsampled previous output plus the matching encoder
  // stage; the last one works on the upsampled features alone.
  decoder_[0] = Conv2d({.in = ch[4] + ch[3], .out = 2 * w0});
  decoder_[1] = Conv2d({.in = 2 * w0 + ch[2], .out = w0});
  decoder_[2] = Conv2d({.in = w0 + ch[1], .out = w0});
  decoder_[3] = Conv2d({.in = w0, .out = 1});
}

ag::Var DepthCorrectionNet::operator()(const ag::Var& rgb, const ag::Var& depth) const {
  const Shape s = rgb->shape();
  require(s.c == 3 && depth->shape().c == 1, "DepthCorrectionNet expects RGB and one depth channel");
  require(s.h == depth->shape().h && s.w == depth->shape().w, "DepthCorrectionNet: rgb/depth size mismatch");
  check_input_size(s.h, s.w, "DepthCorrectionNet");
  const auto f = encoder_(ag::concat_channels({rgb, depth}));
  ag::Var h = f[4];
  for (int i = 0; i < 3; ++i) {
    const int level = 3 - i;  // H/8, H/4, H/2
    const auto& skip = f[level];
    h = ag::resize_bilinear(h, skip->shape().h, skip->shape().w);
    h = ag::leaky_relu(decoder_[i](ag::concat_channels({h, skip})), slope_);
  }
  h = ag::resize_bilinear(h, s.h, s.w);
  return ag::sigmoid(decoder_[3](h));
}

void DepthCorrectionNet::init(double new_layer_std, Rng& rng) {
  encoder_.init(InitScheme::He, 0.0, rng);
  for (auto& c : decoder_) c.init(InitScheme::Gaussian, new_layer_std, rng);
}

void DepthCorrectionNet::collect(ParamList& out, const std::string& prefix) const {
  encoder_.collect(out, prefix + ".encoder");
  for (int i = 0; i < 4; ++i) decoder_[i].collect(out, prefix + ".decoder" + std::to_string(i));
}

// ---- MixPermutation -----------------------------------------------------

MixPermutation MixPermutation::identity(int n) {
  MixPermutation p;
  p.r.resize(n);
  std::iota(p.r.begin(), p.r.end(), 0);
  return p;
}

MixPermutation MixPermutation::random(int n, Rng& rng) {
  MixPermutation p = identity(n);
  std::shuffle(p.r.begin(), p.r.end(), rng.engine());
  return p;
}

MixPermutation MixPermutation::inverse() const {
  require(valid(), "inverse of an invalid permutation");
  MixPermutation inv;
  inv.r.resize(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) inv.r[r[i]] = int(i);
  return inv;
}

bool MixPermutation::valid() const {
  std::vector<char> seen(r.size(), 0);
  for (int v : r) {
    if (v < 0 || std::size_t(v) >= r.size() || seen[v]) return false;
    seen[v] = 1;
  }
  return true;
}

// ---- PredictionNet ------------------------------------------------------

PredictionNet::PredictionNet(int M, int K) : M_(M), K_(K) {
  require(K >= 2 && K % 2 == 0, "K must be even and >= 2");
  c1_ = Conv2d({.in = M + K, .out = K, .kernel = 1});
  c2_ = Conv2d({.in = K, .out = K / 2, .kernel = 1});
  c3_ = Conv2d({.in = K / 2, .out = 1, .kernel = 1});
}

ag::Var PredictionNet::operator()(const ag::Var& sd, const ag::Var& ss, const MixPermutation& r, int out_h, int out_w,
                                  const DropoutCtx& drop) const {
  require(sd->shape().c == M_ && ss->shape().c == K_, "PredictionNet: expected " + std::to_string(M_) + "+" +
                                                          std::to_string(K_) + " channels");
  require(sd->shape().h == ss->shape().h && sd->shape().w == ss->shape().w, "PredictionNet: S^d/S^s size mismatch");
  require(int(r.r.size()) == M_ + K_, "PredictionNet: permutation length " + std::to_string(r.r.size()) +
                                           " != " + std::to_string(M_ + K_));
  ag::Var mixed = ag::permute_channels(ag::concat_channels({sd, ss}), r.r);
  ag::Var h = drop(ag::leaky_relu(c1_(mixed), slope_));
  h = drop(ag::leaky_relu(c2_(h), slope_));
  return ag::resize_bilinear(c3_(h), out_h, out_w);
}

void PredictionNet::init(double std, Rng& rng) {
  c1_.init(InitScheme::Gaussian, std, rng);
  c2_.init(InitScheme::Gaussian, std, rng);
  c3_.init(InitScheme::Gaussian, std, rng);
}

void PredictionNet::collect(ParamList& out, const std::string& prefix) const {
  c1_.collect(out, prefix + ".c1");
  c2_.collect(out, prefix + ".c2");
  c3_.collect(out, prefix + ".c3");
}

}  // namespace probsal
