#pragma once

#include <vector>

#include "probsal/autograd.hpp"
#include "probsal/rng.hpp"

namespace probsal::ag {

// Element-wise, same shapes.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);

Var leaky_relu(const Var& a, double slope);
Var sigmoid(const Var& a);
Var exp(const Var& a);
Var sqrt(const Var& a);
Var square(const Var& a);
Var abs(const Var& a);

Var sum(const Var& a);
Var mean(const Var& a);
// Weighted sum of single-element Vars.
Var weighted_sum(const std::vector<Var>& terms, const std::vector<double>& weights);
// Picks the smallest single-element Var; gradient reaches only the winner.
Var min_of(const std::vector<Var>& terms, int* argmin = nullptr);

Var concat_channels(const std::vector<Var>& parts);
Var slice_channels(const Var& a, int c0, int count);
// out channel i = a channel perm[i].
Var permute_channels(const Var& a, const std::vector<int>& perm);
Var select_batch(const Var& a, int n);

struct ConvParams {
  int stride = 1;
  int pad = 0;
  int dilation = 1;
};
// weight (Co, Ci, k, k); bias (1, Co, 1, 1) or null.
Var conv2d(const Var& x, const Var& weight, const Var& bias, ConvParams p);
Var max_pool2(const Var& x);
// Bilinear, corner-aligned.
Var resize_bilinear(const Var& x, int out_h, int out_w);
Var global_avg_pool(const Var& x);
// Inverted dropout; identity when rate == 0.
Var dropout(const Var& x, double rate, Rng& rng);

// Forward differences along x (W-1 columns) and y (H-1 rows).
Var diff_x(const Var& a);
Var diff_y(const Var& a);
// sqrt(dx² + dy²) on the full H×W grid, last column/row differences taken
// as zero. Subgradient 0 where the magnitude vanishes.
Var grad_magnitude(const Var& a);
// a / max(max(a), eps) over the whole tensor.
Var max_normalize(const Var& a, double eps);

// mu, logvar (N,K,1,1); noise (N,K,H,W) -> mu + exp(logvar/2) * noise.
Var expand_latent(const Var& mu, const Var& logvar, const Tensor& noise);

// Mean binary cross-entropy of sigmoid(logits) against target.
Var bce_with_logits(const Var& logits, const Var& target);
// Mean smooth-L1 (quadratic below beta).
Var smooth_l1(const Var& a, const Var& b, double beta);
// KL(q || p) for diagonal Gaussians given as (N,K,1,1) mean/log-variance;
// summed over K, averaged over N.
Var kl_diag_gaussian(const Var& mu_q, const Var& logvar_q, const Var& mu_p, const Var& logvar_p);

}  // namespace probsal::ag
