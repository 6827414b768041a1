#include "probsal/latent.hpp"

#include <cmath>

#include "probsal/error.hpp"

namespace probsal {

GaussianLatent GaussianLatent::standard_normal(int n, int K) {
  return {ag::constant(Tensor(Shape{n, K, 1, 1})), ag::constant(Tensor(Shape{n, K, 1, 1}))};
}

GaussianLatent GaussianLatent::fixed(Tensor mu, Tensor logvar) {
  require(mu.shape() == logvar.shape(), "latent mu/logvar shape mismatch");
  return {ag::constant(std::move(mu)), ag::constant(std::move(logvar))};
}

void validate(const GaussianLatent& g) {
  require(g.mu && g.logvar, "latent: missing parameters");
  require(g.mu->shape() == g.logvar->shape(), "latent: mu/logvar shape mismatch");
  require(g.K() >= 1, "latent: K must be >= 1");
  for (double lv : g.logvar->value().span()) {
    const double s = std::exp(0.5 * lv);
    if (!(s > 0.0) || !std::isfinite(s)) throw NumericError("latent: sigma not positive and finite");
  }
}

void validate(const LatentNetConfig& c) {
  require(c.K >= 1, "latent K must be >= 1");
  require(c.input_channels >= 1, "latent input_channels must be >= 1");
  for (int ch : c.conv_channels) require(ch >= 1, "latent conv_channels must be positive");
}

LatentNet::LatentNet(LatentNetConfig cfg) : cfg_(cfg) {
  validate(cfg_);
  int in = cfg_.input_channels;
  for (int s = 0; s < 5; ++s) {
    stages_[s] = Conv2d({.in = in, .out = cfg_.conv_channels[s], .kernel = 3, .stride = 2, .pad = 1});
    in = cfg_.conv_channels[s];
  }
  wide_ = Conv2d({.in = in, .out = 4 * cfg_.K, .kernel = 1});
  head_ = Conv2d({.in = 4 * cfg_.K, .out = 2 * cfg_.K, .kernel = 1});
}

GaussianLatent LatentNet::operator()(const ag::Var& x) const {
  const Shape s = x->shape();
  require(s.c == cfg_.input_channels, "latent net expects " + std::to_string(cfg_.input_channels) +
                                          " input channels, got " + std::to_string(s.c));
  require(s.h >= kMinSize && s.w >= kMinSize,
          "latent net input " + s.str() + " too small for five stride-2 stages (min " + std::to_string(kMinSize) + ")");
  ag::Var h = x;
  for (const auto& conv : stages_) h = ag::leaky_relu(conv(h), cfg_.leaky_slope);
  h = ag::global_avg_pool(wide_(h));
  ag::Var out = head_(h);
  return {ag::slice_channels(out, 0, cfg_.K), ag::slice_channels(out, cfg_.K, cfg_.K)};
}

void LatentNet::init(double std, Rng& rng) {
  for (auto& c : stages_) c.init(InitScheme::Gaussian, std, rng);
  wide_.init(InitScheme::Gaussian, std, rng);
  head_.init(InitScheme::Gaussian, std, rng);
}

void LatentNet::collect(ParamList& out, const std::string& prefix) const {
  for (int s = 0; s < 5; ++s) stages_[s].collect(out, prefix + ".stage" + std::to_string(s));
  wide_.collect(out, prefix + ".wide");
  head_.collect(out, prefix + ".head");
}

ag::Var kl_divergence(const GaussianLatent& q, const GaussianLatent& p) {
  require(q.mu->shape() == p.mu->shape(),
          "kl_divergence: dimension mismatch " + q.mu->shape().str() + " vs " + p.mu->shape().str());
  return ag::kl_diag_gaussian(q.mu, q.logvar, p.mu, p.logvar);
}

Tensor draw_noise(int n, int K, int h, int w, Rng& rng) {
  Tensor e(Shape{n, K, h, w});
  for (auto& v : e.vec()) v = rng.normal();
  return e;
}

ag::Var expand(const GaussianLatent& latent, int h, int w, Rng& rng) {
  require(h > 0 && w > 0, "expand: non-positive map size");
  return expand(latent, draw_noise(latent.batch(), latent.K(), h, w, rng));
}

ag::Var expand(const GaussianLatent& latent, const Tensor& noise) {
  return ag::expand_latent(latent.mu, latent.logvar, noise);
}

}  // namespace probsal
