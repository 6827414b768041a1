#pragma once
// Independent reference computations used by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "probsal/autograd.hpp"
#include "probsal/tensor.hpp"

namespace probsal::testing {

using LossFn = std::function<ag::Var(const std::vector<ag::Var>&)>;

struct GradCheck {
  double rel_error = 0.0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||, tiny)
  double analytic_norm = 0.0;
  double numeric_norm = 0.0;
};

// Central differences with step h on every input element, compared norm-wise
// with the reverse-mode gradient. Only inputs flagged in `wrt` are checked.
inline GradCheck check_gradients(const LossFn& f, const std::vector<Tensor>& inputs, const std::vector<bool>& wrt,
                                 double h = 1e-6) {
  std::vector<ag::Var> vars;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    vars.push_back(wrt[i] ? ag::parameter(inputs[i]) : ag::constant(inputs[i]));
  }
  ag::backward(f(vars));
  double diff2 = 0, an2 = 0, nu2 = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!wrt[i]) continue;
    const Tensor analytic = vars[i]->has_grad() ? vars[i]->grad() : Tensor(inputs[i].shape());
    for (std::size_t k = 0; k < inputs[i].numel(); ++k) {
      auto eval = [&](double delta) {
        ag::NoGradGuard guard;
        std::vector<ag::Var> shifted;
        for (std::size_t j = 0; j < inputs.size(); ++j) {
          Tensor t = inputs[j];
          if (j == i) t[k] += delta;
          shifted.push_back(ag::constant(std::move(t)));
        }
        return f(shifted)->value().item();
      };
      const double numeric = (eval(h) - eval(-h)) / (2 * h);
      diff2 += (analytic[k] - numeric) * (analytic[k] - numeric);
      an2 += analytic[k] * analytic[k];
      nu2 += numeric * numeric;
    }
  }
  GradCheck r;
  r.analytic_norm = std::sqrt(an2);
  r.numeric_norm = std::sqrt(nu2);
  r.rel_error = std::sqrt(diff2) / std::max({r.analytic_norm, r.numeric_norm, 1e-300});
  return r;
}

// E_q[log q(z) - log p(z)] for diagonal Gaussians by plain Monte Carlo.
inline double kl_monte_carlo(const std::vector<double>& mu_q, const std::vector<double>& lv_q,
                             const std::vector<double>& mu_p, const std::vector<double>& lv_p, long samples,
                             std::mt19937_64& gen) {
  std::normal_distribution<double> n01;
  const std::size_t K = mu_q.size();
  double total = 0;
  for (long s = 0; s < samples; ++s) {
    double lr = 0;
    for (std::size_t k = 0; k < K; ++k) {
      const double sq = std::exp(0.5 * lv_q[k]), sp = std::exp(0.5 * lv_p[k]);
      const double z = mu_q[k] + sq * n01(gen);
      const double a = (z - mu_q[k]) / sq, b = (z - mu_p[k]) / sp;
      lr += -0.5 * a * a - std::log(sq) + 0.5 * b * b + std::log(sp);
    }
    total += lr;
  }
  return total / double(samples);
}

struct VoteOracle {
  std::vector<double> majority;
  std::vector<double> gray;
};

// Pixel-by-pixel voting written from the definition, sharing no code with the
// library: threshold min(2 mean, 1 - 1e-6), strict majority, ties to 0.
inline VoteOracle brute_force_vote(const std::vector<std::vector<double>>& maps) {
  const std::size_t C = maps.size(), n = maps[0].size();
  std::vector<double> tau(C);
  for (std::size_t c = 0; c < C; ++c) {
    double s = 0;
    for (double v : maps[c]) s += v;
    tau[c] = std::min(2.0 * (s / double(n)), 1.0 - 1e-6);
  }
  VoteOracle o;
  o.majority.assign(n, 0.0);
  o.gray.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t ones = 0;
    for (std::size_t c = 0; c < C; ++c) ones += maps[c][i] > tau[c];
    if (2 * ones <= C) continue;
    o.majority[i] = 1.0;
    double agree = 0, sum = 0;
    for (std::size_t c = 0; c < C; ++c) {
      if (maps[c][i] > tau[c]) {
        agree += 1;
        sum += maps[c][i];
      }
    }
    o.gray[i] = (agree / double(C)) * (sum / agree);
  }
  return o;
}

}  // namespace probsal::testing
