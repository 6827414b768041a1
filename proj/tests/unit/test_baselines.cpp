#include <doctest.h>

#include "helpers.hpp"
#include "probsal/baselines.hpp"
#include "probsal/error.hpp"
#include "probsal/pipeline.hpp"

using namespace probsal;
using namespace probsal::testing;

namespace {

RgbdSample scene16(int i = 0) {
  SynthConfig sc;
  sc.size = 16;
  return render_scene(sc, i).sample;
}

ModelConfig variant_config(Variant v) {
  ModelConfig mc;
  mc.init_std = 0.05;
  mc.variant.variant = v;
  return mc;
}

}  // namespace

TEST_CASE("VAE KL is zero at the standard normal and matches Monte Carlo") {
  CHECK(vae_kl(GaussianLatent::standard_normal(1, 8))->value().item() == 0.0);
  const GaussianLatent p = GaussianLatent::fixed(Tensor(Shape{1, 2, 1, 1}, std::vector<double>{0.4, -0.2}),
                                                 Tensor(Shape{1, 2, 1, 1}, std::vector<double>{0.3, -0.6}));
  std::mt19937_64 g(1);
  const double mc = kl_monte_carlo({0.4, -0.2}, {0.3, -0.6}, {0, 0}, {0, 0}, 1000000, g);
  const double kl = vae_kl(p)->value().item();
  CHECK(std::abs(mc - kl) / kl < 1e-2);
}

TEST_CASE("VAE mode never routes the annotation through the latent path") {
  Rng rng(2);
  Model model(variant_config(Variant::Vae), rng);
  const RgbdSample s = scene16();
  auto y = ag::parameter(s.annotations[0]);
  Rng r(3);
  const ForwardResult f = model.forward_train(make_input(s), y, {}, Reduction::Mean, r);
  CHECK_FALSE(f.posterior.mu);
  // The KL term alone carries no gradient to Y.
  ag::backward(vae_kl(f.prior));
  CHECK((!y->has_grad() || y->grad().max() == 0.0));
  CHECK_THROWS_AS(model.posterior(make_input(s), y), InvalidArgument);
}

TEST_CASE("M-head loss is the minimum BCE and only the winner gets gradient") {
  std::mt19937_64 g(4);
  const Tensor y = binary_map(4, 4, g);
  std::vector<ag::Var> heads;
  std::vector<double> oracle;
  for (int h = 0; h < 3; ++h) {
    heads.push_back(ag::parameter(random_tensor({1, 1, 4, 4}, g, -2, 2)));
    oracle.push_back(ag::bce_with_logits(ag::constant(heads.back()->value()), ag::constant(y))->value().item());
  }
  const MHeadLoss m = mhead_loss(heads, ag::constant(y));
  const int best = int(std::min_element(oracle.begin(), oracle.end()) - oracle.begin());
  CHECK(m.winner == best);
  CHECK(m.loss->value().item() == oracle[best]);
  for (int h = 0; h < 3; ++h) {
    CHECK(m.per_head[h] == doctest::Approx(oracle[h]));
    CHECK(m.loss->value().item() <= oracle[h]);
  }
  ag::backward(m.loss);
  for (int h = 0; h < 3; ++h) {
    const bool touched = heads[h]->has_grad() && heads[h]->grad().max() != heads[h]->grad().min();
    CHECK(touched == (h == best));
  }
}

TEST_CASE("M-head special cases: identical heads and a perfect head") {
  std::mt19937_64 g(5);
  const Tensor y = binary_map(4, 4, g);
  const Tensor l = random_tensor({1, 1, 4, 4}, g, -1, 1);
  const double single = ag::bce_with_logits(ag::constant(l), ag::constant(y))->value().item();
  CHECK(mhead_loss({ag::constant(l), ag::constant(l), ag::constant(l)}, ag::constant(y)).loss->value().item() == single);

  Tensor perfect(y.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) perfect[i] = y[i] > 0 ? INFINITY : -INFINITY;
  std::vector<ag::Var> five;
  for (int h = 0; h < 5; ++h) five.push_back(ag::constant(h == 3 ? perfect : random_tensor({1, 1, 4, 4}, g)));
  const MHeadLoss m = mhead_loss(five, ag::constant(y));
  CHECK(m.loss->value().item() == 0.0);
  CHECK(m.winner == 3);
}

TEST_CASE("MC dropout: rate 0 collapses, seeds reproduce, rate 0.1 varies") {
  Rng rng(6);
  Model model(variant_config(Variant::McDropout), rng);
  const RgbdSample s = scene16();
  Rng a(7), b(7), c(8);
  const PredictionSet none = mcdropout_sample(model, s, 5, 0.0, a);
  for (int i = 1; i < 5; ++i) CHECK(none.gray[i].vec() == none.gray[0].vec());

  Rng d(9), e(9);
  const PredictionSet x = mcdropout_sample(model, s, 5, 0.1, d);
  const PredictionSet z = mcdropout_sample(model, s, 5, 0.1, e);
  for (int i = 0; i < 5; ++i) CHECK(x.gray[i].vec() == z.gray[i].vec());
  CHECK(mean_pixel_variance(x.gray) > 0.0);
}

TEST_CASE("every variant trains a step and samples through the shared interface") {
  for (Variant v : {Variant::Cvae, Variant::Vae, Variant::MHead, Variant::McDropout, Variant::NoDepthCorr}) {
    CAPTURE(to_string(v));
    Rng rng(10);
    Model model(variant_config(v), rng);
    const RgbdSample s = scene16();
    Rng r(11);
    const ForwardResult f = model.forward_train(make_input(s), ag::constant(s.annotations[0]), {}, Reduction::Mean, r);
    CHECK(std::isfinite(f.total->value().item()));
    CHECK((f.terms.depth != nullptr) == (v != Variant::NoDepthCorr));
    const PredictionSet p = sample_predictions(model, s, 3, r);
    CHECK(p.size() == 3);
    CHECK(variant_from_string(to_string(v)) == v);
  }
}

TEST_CASE("ablation specs") {
  CHECK(parse_ablation("vae").variant == Variant::Vae);
  CHECK(parse_ablation("mhead").variant == Variant::MHead);
  CHECK(parse_ablation("mcdropout").variant == Variant::McDropout);
  CHECK(parse_ablation("no-depthcorr").variant == Variant::NoDepthCorr);
  const AblationSpec k = parse_ablation("K=4");
  CHECK(k.variant == Variant::Cvae);
  CHECK(k.K == 4);
  CHECK(apply_ablation(TrainConfig::tiny(), k).K == 4);
  CHECK(apply_ablation(TrainConfig::tiny(), parse_ablation("mhead")).variant.variant == Variant::MHead);
  CHECK_THROWS_AS(parse_ablation("K=3"), InvalidArgument);
  CHECK_THROWS_AS(parse_ablation("K=0"), InvalidArgument);
  CHECK_THROWS_AS(parse_ablation("dropout"), InvalidArgument);
}

TEST_CASE("variant config validation") {
  VariantConfig v;
  v.variant = Variant::MHead;
  v.heads = 1;
  CHECK_THROWS_AS(validate(v), InvalidArgument);
  v = {};
  v.variant = Variant::McDropout;
  v.dropout_rate = 1.0;
  CHECK_THROWS_AS(validate(v), InvalidArgument);
}
