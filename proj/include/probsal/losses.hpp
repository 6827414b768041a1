#pragma once

#include "probsal/latent.hpp"

namespace probsal {

struct LossWeights {
  double lambda1 = 0.3;  // depth term
  double lambda2 = 0.3;  // smoothness term
  double alpha = 10.0;   // edge sharpness in the smoothness weight
  double psi_eps = 1e-6;
  double smoothl1_beta = 1.0;
  double boundary_eps = 1e-8;
};

void validate(const LossWeights& w);

// Mean BCE of sigmoid(logits) against y plus KL(q || p).
ag::Var cvae_loss(const ag::Var& logits, const ag::Var& y, const GaussianLatent& q, const GaussianLatent& p);

// 1 - 2 sum(a b) / (sum a + sum b + eps) over max-normalized gradient
// magnitudes. All-flat inputs give 0.
ag::Var boundary_iou_loss(const ag::Var& dprime, const ag::Var& ig, const LossWeights& w = {});

// Mean smooth-L1(dprime, depth) + boundary IoU(dprime, ig).
ag::Var depth_loss(const ag::Var& dprime, const ag::Var& depth, const ag::Var& ig, const LossWeights& w = {});

enum class Reduction { Sum, Mean };

// Edge-aware first-order smoothness of a saliency map in [0,1], summed over
// interior forward differences in x and y (or averaged per difference).
ag::Var smoothness_loss(const ag::Var& p, const ag::Var& ig, const LossWeights& w = {},
                        Reduction reduction = Reduction::Sum);

struct LossTerms {
  ag::Var cvae;
  ag::Var depth;
  ag::Var smooth;
};

// cvae + lambda1 * depth + lambda2 * smooth; a null depth term counts as 0.
ag::Var total_loss(const LossTerms& t, const LossWeights& w = {});

}  // namespace probsal
