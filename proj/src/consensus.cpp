#include "probsal/consensus.hpp"

#include <algorithm>

#include "probsal/error.hpp"

namespace probsal {

double adaptive_threshold_value(const Tensor& p) {
  require(p.numel() > 0, "adaptive threshold of empty map");
  return std::min(2.0 * p.mean(), 1.0 - 1e-6);
}

Tensor adaptive_threshold(const Tensor& p) {
  const double tau = adaptive_threshold_value(p);
  Tensor b(p.shape());
  for (std::size_t i = 0; i < p.numel(); ++i) b[i] = p[i] > tau ? 1.0 : 0.0;
  return b;
}

PredictionSet consensus(std::vector<Tensor> preds) {
  require(!preds.empty(), "consensus needs at least one prediction");
  const Shape s = preds[0].shape();
  for (const auto& p : preds) {
    require(p.shape() == s, "consensus: prediction shape " + p.shape().str() + " differs from " + s.str());
  }
  PredictionSet out;
  out.gray = std::move(preds);
  for (const auto& p : out.gray) out.binary.push_back(adaptive_threshold(p));

  const int c = int(out.gray.size());
  out.majority = Tensor(s);
  out.consensus_gray = Tensor(s);
  for (std::size_t i = 0; i < s.numel(); ++i) {
    int ones = 0;
    for (const auto& b : out.binary) ones += b[i] > 0.5 ? 1 : 0;
    const double vote = 2 * ones > c ? 1.0 : 0.0;
    out.majority[i] = vote;
    if (vote == 0.0) continue;
    double agree = 0.0, gray_sum = 0.0;
    for (int k = 0; k < c; ++k) {
      if (out.binary[k][i] == vote) {
        agree += 1.0;
        gray_sum += out.gray[k][i];
      }
    }
    out.consensus_gray[i] = (agree / c) * (gray_sum / agree);
  }
  return out;
}

double mean_pixel_variance(const std::vector<Tensor>& maps) {
  require(!maps.empty(), "variance of no maps");
  const std::size_t n = maps[0].numel();
  const double c = double(maps.size());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double m = 0.0;
    for (const auto& t : maps) m += t[i];
    m /= c;
    double v = 0.0;
    for (const auto& t : maps) v += (t[i] - m) * (t[i] - m);
    total += v / c;
  }
  return total / double(n);
}

}  // namespace probsal
