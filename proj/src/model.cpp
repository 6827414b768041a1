#include "probsal/model.hpp"

#include "probsal/baselines.hpp"
#include "probsal/error.hpp"

namespace probsal {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Cvae: return "cvae";
    case Variant::Vae: return "vae";
    case Variant::MHead: return "mhead";
    case Variant::McDropout: return "mcdropout";
    case Variant::NoDepthCorr: return "no-depthcorr";
  }
  return "?";
}

Variant variant_from_string(const std::string& s) {
  if (s == "cvae") return Variant::Cvae;
  if (s == "vae") return Variant::Vae;
  if (s == "mhead") return Variant::MHead;
  if (s == "mcdropout") return Variant::McDropout;
  if (s == "no-depthcorr" || s == "no_depthcorr") return Variant::NoDepthCorr;
  throw InvalidArgument("unknown variant '" + s + "'");
}

void validate(const VariantConfig& v) {
  if (v.variant == Variant::MHead) require(v.heads >= 2, "mhead needs heads >= 2");
  require(v.dropout_rate > 0.0 && v.dropout_rate < 1.0, "dropout_rate must be in (0, 1)");
  require(v.dropout_samples >= 1, "dropout_samples must be >= 1");
}

void validate(const ModelConfig& c) {
  validate(c.encoder);
  validate(c.variant);
  require(c.K >= 2 && c.K % 2 == 0, "K must be even and >= 2");
  require(c.M >= 1, "M must be >= 1");
  require(c.init_std > 0.0, "weight_init_std must be positive");
}

ModelInput make_input(const RgbdSample& s) {
  validate(s);
  return {ag::constant(s.rgb), ag::constant(s.depth), ag::constant(to_intensity(s.rgb).ig)};
}

bool Model::has_latent() const {
  const Variant v = cfg_.variant.variant;
  return v == Variant::Cvae || v == Variant::Vae || v == Variant::NoDepthCorr;
}

Model::Model(ModelConfig cfg, Rng& rng) : cfg_(std::move(cfg)) {
  validate(cfg_);
  const Variant v = cfg_.variant.variant;
  if (uses_depth_correction()) {
    depth_net_ = DepthCorrectionNet(cfg_.encoder);
    depth_net_.init(cfg_.init_std, rng);
  }
  saliency_ = SaliencyNet(cfg_.encoder, cfg_.M);
  saliency_.init(cfg_.init_std, rng);
  if (has_latent()) {
    prior_net_ = LatentNet({.K = cfg_.K, .conv_channels = cfg_.latent_channels, .input_channels = 4});
    prior_net_.init(cfg_.init_std, rng);
  }
  if (v == Variant::Cvae || v == Variant::NoDepthCorr) {
    posterior_net_ = LatentNet({.K = cfg_.K, .conv_channels = cfg_.latent_channels, .input_channels = 5});
    posterior_net_.init(cfg_.init_std, rng);
  }
  const int nheads = v == Variant::MHead ? cfg_.variant.heads : 1;
  for (int i = 0; i < nheads; ++i) {
    heads_.emplace_back(cfg_.M, cfg_.K);
    heads_.back().init(cfg_.init_std, rng);
  }
  r_ = MixPermutation::random(cfg_.M + cfg_.K, rng);
}

ParamList Model::params() const {
  ParamList out;
  const Variant v = cfg_.variant.variant;
  if (uses_depth_correction()) depth_net_.collect(out, "depth_net");
  saliency_.collect(out, "saliency");
  if (has_latent()) prior_net_.collect(out, "prior");
  if (v == Variant::Cvae || v == Variant::NoDepthCorr) posterior_net_.collect(out, "posterior");
  for (std::size_t i = 0; i < heads_.size(); ++i) heads_[i].collect(out, "head" + std::to_string(i));
  return out;
}

ag::Var Model::refine_depth(const ModelInput& in) const {
  if (!uses_depth_correction()) return in.depth;
  return depth_net_(in.rgb, in.depth);
}

ag::Var Model::features(const ModelInput& in, const ag::Var& dprime, const DropoutCtx& drop) const {
  return saliency_(in.rgb, dprime, drop);
}

GaussianLatent Model::prior(const ModelInput& in) const {
  require(has_latent(), "variant " + to_string(cfg_.variant.variant) + " has no latent path");
  return prior_net_(ag::concat_channels({in.rgb, in.depth}));
}

GaussianLatent Model::posterior(const ModelInput& in, const ag::Var& y) const {
  const Variant v = cfg_.variant.variant;
  require(v == Variant::Cvae || v == Variant::NoDepthCorr, "variant " + to_string(v) + " has no posterior net");
  return posterior_net_(ag::concat_channels({in.rgb, in.depth, y}));
}

ag::Var Model::predict(const ag::Var& sd, const ag::Var& ss, int head, int out_h, int out_w,
                       const DropoutCtx& drop) const {
  require(head >= 0 && head < heads(), "head index out of range");
  return heads_[head](sd, ss, r_, out_h, out_w, drop);
}

ag::Var Model::zero_latent_map(const ag::Var& sd) const {
  const Shape s = sd->shape();
  return ag::constant(Tensor(Shape{s.n, cfg_.K, s.h, s.w}));
}

ForwardResult Model::forward_train(const ModelInput& in, const ag::Var& y, const LossWeights& w,
                                   Reduction smooth_reduction, Rng& rng) const {
  const int H = in.rgb->shape().h, W = in.rgb->shape().w;
  require(y->shape() == Shape{1, 1, H, W}, "annotation shape " + y->shape().str() + " does not match input");
  const Variant v = cfg_.variant.variant;
  const DropoutCtx drop = v == Variant::McDropout ? DropoutCtx{cfg_.variant.dropout_rate, &rng} : DropoutCtx{};

  ForwardResult r;
  r.dprime = refine_depth(in);
  r.sd = features(in, r.dprime, drop);
  const int h = r.sd->shape().h, wd = r.sd->shape().w;

  switch (v) {
    case Variant::Cvae:
    case Variant::NoDepthCorr: {
      r.posterior = posterior(in, y);
      r.prior = prior(in);
      r.logits.push_back(predict(r.sd, expand(r.posterior, h, wd, rng), 0, H, W));
      r.terms.cvae = cvae_loss(r.logits[0], y, r.posterior, r.prior);
      break;
    }
    case Variant::Vae: {
      r.prior = prior(in);
      r.logits.push_back(predict(r.sd, expand(r.prior, h, wd, rng), 0, H, W));
      r.terms.cvae = ag::add(ag::bce_with_logits(r.logits[0], y), vae_kl(r.prior));
      break;
    }
    case Variant::MHead: {
      const ag::Var ss = zero_latent_map(r.sd);
      for (int i = 0; i < heads(); ++i) r.logits.push_back(predict(r.sd, ss, i, H, W));
      MHeadLoss m = mhead_loss(r.logits, y);
      r.terms.cvae = m.loss;
      r.winner = m.winner;
      break;
    }
    case Variant::McDropout: {
      r.logits.push_back(predict(r.sd, zero_latent_map(r.sd), 0, H, W, drop));
      r.terms.cvae = ag::bce_with_logits(r.logits[0], y);
      break;
    }
  }
  r.terms.smooth = smoothness_loss(ag::sigmoid(r.logits[r.winner]), in.ig, w, smooth_reduction);
  if (uses_depth_correction()) r.terms.depth = depth_loss(r.dprime, in.depth, in.ig, w);
  r.total = total_loss(r.terms, w);
  return r;
}

void Model::load_values(const Model& other) {
  const ParamList mine = params();
  const ParamList theirs = other.params();
  require(mine.size() == theirs.size(), "load_values: parameter count mismatch");
  for (std::size_t i = 0; i < mine.size(); ++i) {
    require(mine[i].name == theirs[i].name && mine[i].var->shape() == theirs[i].var->shape(),
            "load_values: parameter " + mine[i].name + " does not match");
    mine[i].var->mutable_value() = theirs[i].var->value();
  }
  r_ = other.r_;
}

}  // namespace probsal
