#pragma once

#include <vector>

#include "probsal/tensor.hpp"

namespace probsal {

// Binarization threshold tau = min(2 * mean(p), 1 - 1e-6).
double adaptive_threshold_value(const Tensor& p);
// 1 where p > tau, else 0.
Tensor adaptive_threshold(const Tensor& p);

// C sampled saliency maps for one input and their fused result.
struct PredictionSet {
  std::vector<Tensor> gray;    // P^c in [0,1]
  std::vector<Tensor> binary;  // adaptive-threshold binarizations
  Tensor majority;             // per-pixel strict-majority vote, ties -> 0
  Tensor consensus_gray;       // agreement fraction x mean gray of agreeing maps

  int size() const { return int(gray.size()); }
};

// Majority voting over adaptive-thresholded predictions. For each pixel the
// indicator marks maps whose vote matches the majority; the gray output is
// (#agreeing / C) * mean(P^c over agreeing c), and 0 where the majority is 0.
PredictionSet consensus(std::vector<Tensor> preds);

// Per-pixel variance of the gray maps around their mean, averaged over pixels.
double mean_pixel_variance(const std::vector<Tensor>& maps);

}  // namespace probsal
