#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "probsal/error.hpp"
#include "probsal/latent.hpp"

using namespace probsal;
using namespace probsal::testing;

namespace {

GaussianLatent make_latent(std::vector<double> mu, std::vector<double> lv) {
  const int K = int(mu.size());
  return GaussianLatent::fixed(Tensor(Shape{1, K, 1, 1}, std::move(mu)), Tensor(Shape{1, K, 1, 1}, std::move(lv)));
}

double kl_value(const GaussianLatent& q, const GaussianLatent& p) { return kl_divergence(q, p)->value().item(); }

}  // namespace

TEST_CASE("zero weights give a standard normal latent of length 2K") {
  for (int channels : {4, 5}) {
    LatentNetConfig c;
    c.K = 6;
    c.input_channels = channels;
    LatentNet net(c);
    Rng rng(1);
    net.init(0.0, rng);
    std::mt19937_64 g(2);
    for (int size : {16, 32, 48}) {
      const GaussianLatent z = net(ag::constant(random_tensor({1, channels, size, size}, g)));
      CHECK(z.mu->shape() == Shape{1, 6, 1, 1});
      CHECK(z.logvar->shape() == Shape{1, 6, 1, 1});
      for (double v : z.mu->value().span()) CHECK(v == 0.0);
      for (double v : z.logvar->value().span()) CHECK(v == 0.0);
    }
  }
}

TEST_CASE("random weights separate different inputs and reject tiny ones") {
  for (int channels : {4, 5}) {
    LatentNetConfig c;
    c.input_channels = channels;
    LatentNet net(c);
    Rng rng(3);
    net.init(0.1, rng);
    std::mt19937_64 g(4);
    const auto a = net(ag::constant(random_tensor({1, channels, 32, 32}, g)));
    const auto b = net(ag::constant(random_tensor({1, channels, 32, 32}, g)));
    CHECK(max_abs_diff(a.mu->value(), b.mu->value()) > 0.0);
    CHECK_THROWS_AS(net(ag::constant(Tensor(Shape{1, channels, 8, 8}))), InvalidArgument);
    CHECK_THROWS_AS(net(ag::constant(Tensor(Shape{1, channels + 1, 32, 32}))), InvalidArgument);
  }
}

TEST_CASE("KL anchors against the Monte-Carlo oracle") {
  std::mt19937_64 g(5);
  CHECK(kl_value(make_latent({0.3}, {0.2}), make_latent({0.3}, {0.2})) == 0.0);

  const double a = kl_value(make_latent({1.0}, {0.0}), make_latent({0.0}, {0.0}));
  CHECK(a == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(std::abs(kl_monte_carlo({1.0}, {0.0}, {0.0}, {0.0}, 1000000, g) - a) / a < 1e-2);

  const double b = kl_value(make_latent({0.0}, {std::log(4.0)}), make_latent({0.0}, {0.0}));
  CHECK(b == doctest::Approx(0.8069).epsilon(1e-4));
  CHECK(std::abs(kl_monte_carlo({0.0}, {std::log(4.0)}, {0.0}, {0.0}, 1000000, g) - b) / b < 1e-2);
}

TEST_CASE("KL is non-negative and zero only for equal parameters") {
  std::mt19937_64 g(6);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> mq(4), lq(4), mp(4), lp(4);
    for (int k = 0; k < 4; ++k) {
      mq[k] = u(g);
      lq[k] = u(g);
      mp[k] = u(g);
      lp[k] = u(g);
    }
    CHECK(kl_value(make_latent(mq, lq), make_latent(mp, lp)) > 0.0);
    CHECK(kl_value(make_latent(mq, lq), make_latent(mq, lq)) == 0.0);
  }
  CHECK_THROWS_AS(kl_divergence(make_latent({0, 0}, {0, 0}), make_latent({0}, {0})), InvalidArgument);
}

TEST_CASE("KL gradients match finite differences") {
  std::mt19937_64 g(7);
  const Tensor mq = random_tensor({1, 5, 1, 1}, g), lq = random_tensor({1, 5, 1, 1}, g),
               mp = random_tensor({1, 5, 1, 1}, g), lp = random_tensor({1, 5, 1, 1}, g);
  auto f = [](const std::vector<ag::Var>& v) { return kl_divergence({v[0], v[1]}, {v[2], v[3]}); };
  CHECK(check_gradients(f, {mq, lq, mp, lp}, {true, true, true, true}).rel_error < 1e-8);
}

TEST_CASE("expand: zero variance gives constant channels") {
  const GaussianLatent z = make_latent({0.5, -1.5, 2.0}, {-1e4, -1e4, -1e4});
  Rng rng(8);
  const Tensor s = expand(z, 6, 7, rng)->value();
  CHECK(s.shape() == Shape{1, 3, 6, 7});
  for (int k = 0; k < 3; ++k)
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 7; ++x) CHECK(s.at(0, k, y, x) == z.mu->value()[k]);
}

TEST_CASE("expand: channel means follow the law of large numbers") {
  const GaussianLatent z = make_latent({0.7, -0.3}, {std::log(2.25), 0.0});
  Rng rng(9);
  const Tensor s = expand(z, 256, 256, rng)->value();
  for (int k = 0; k < 2; ++k) {
    const double sigma = std::exp(0.5 * z.logvar->value()[k]);
    CHECK(std::abs(s.channels(k, 1).mean() - z.mu->value()[k]) < 4 * sigma / 256);
  }
}

TEST_CASE("expand is deterministic for a fixed seed") {
  const GaussianLatent z = make_latent({0.1, 0.2}, {0.0, -0.5});
  Rng a(10), b(10);
  CHECK(expand(z, 8, 8, a)->value().vec() == expand(z, 8, 8, b)->value().vec());
}

TEST_CASE("expand is reparameterized") {
  std::mt19937_64 g(11);
  Rng rng(12);
  const Tensor noise = draw_noise(1, 3, 5, 5, rng);
  const Tensor mu = random_tensor({1, 3, 1, 1}, g), lv = random_tensor({1, 3, 1, 1}, g);
  auto mu_var = ag::parameter(mu), lv_var = ag::parameter(lv);
  for (int k = 0; k < 3; ++k) {
    // d mean(channel k) / d mu_k is exactly 1.
    zero_grads({{"mu", mu_var}, {"lv", lv_var}});
    ag::backward(ag::mean(ag::slice_channels(expand({mu_var, lv_var}, noise), k, 1)));
    CHECK(mu_var->grad()[k] == doctest::Approx(1.0).epsilon(1e-15));
  }
  auto f = [noise](const std::vector<ag::Var>& v) { return ag::sum(ag::square(expand({v[0], v[1]}, noise))); };
  CHECK(check_gradients(f, {mu, lv}, {true, true}).rel_error < 1e-8);
}

TEST_CASE("latent validation") {
  CHECK_THROWS_AS(validate(make_latent({0.0}, {std::nan("")})), NumericError);
  CHECK_NOTHROW(validate(make_latent({0.0}, {0.0})));
  LatentNetConfig c;
  c.K = 0;
  CHECK_THROWS_AS(validate(c), InvalidArgument);
}
