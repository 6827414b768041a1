#include "probsal/losses.hpp"

#include "probsal/error.hpp"

namespace probsal {

void validate(const LossWeights& w) {
  require(w.lambda1 >= 0 && w.lambda2 >= 0 && w.alpha >= 0 && w.psi_eps >= 0 && w.smoothl1_beta > 0 &&
              w.boundary_eps > 0,
          "loss weights must be non-negative (beta and eps positive)");
}

ag::Var cvae_loss(const ag::Var& logits, const ag::Var& y, const GaussianLatent& q, const GaussianLatent& p) {
  return ag::add(ag::bce_with_logits(logits, y), kl_divergence(q, p));
}

ag::Var boundary_iou_loss(const ag::Var& dprime, const ag::Var& ig, const LossWeights& w) {
  require(dprime->shape() == ig->shape(), "boundary_iou_loss: shape mismatch " + dprime->shape().str() + " vs " +
                                              ig->shape().str());
  ag::Var a = ag::max_normalize(ag::grad_magnitude(dprime), w.boundary_eps);
  ag::Var b = ag::max_normalize(ag::grad_magnitude(ig), w.boundary_eps);
  ag::Var sa = ag::sum(a);
  ag::Var sb = ag::sum(b);
  if (sa->value().item() + sb->value().item() == 0.0) {
    // Both maps flat: defined as perfect agreement. Keep the graph connected.
    return ag::scale(ag::add(sa, sb), 0.0);
  }
  ag::Var inter = ag::sum(ag::mul(a, b));
  ag::Var denom = ag::add_scalar(ag::add(sa, sb), w.boundary_eps);
  return ag::add_scalar(ag::scale(ag::div(inter, denom), -2.0), 1.0);
}

ag::Var depth_loss(const ag::Var& dprime, const ag::Var& depth, const ag::Var& ig, const LossWeights& w) {
  require(dprime->shape() == depth->shape(), "depth_loss: shape mismatch");
  return ag::add(ag::smooth_l1(dprime, depth, w.smoothl1_beta), boundary_iou_loss(dprime, ig, w));
}

ag::Var smoothness_loss(const ag::Var& p, const ag::Var& ig, const LossWeights& w, Reduction reduction) {
  require(p->shape() == ig->shape(), "smoothness_loss: shape mismatch " + p->shape().str() + " vs " +
                                         ig->shape().str());
  auto term = [&](const ag::Var& dp, const ag::Var& di) {
    // Edge weight exp(-alpha |dI|) is a constant of the image.
    Tensor weight = di->value();
    for (auto& v : weight.vec()) v = std::exp(-w.alpha * std::abs(v));
    ag::Var s = ag::mul(dp, ag::constant(std::move(weight)));
    ag::Var psi = ag::sqrt(ag::add_scalar(ag::square(s), w.psi_eps));
    return ag::sum(psi);
  };
  const Shape sh = p->shape();
  std::vector<ag::Var> parts;
  if (sh.w > 1) parts.push_back(term(ag::diff_x(p), ag::diff_x(ig)));
  if (sh.h > 1) parts.push_back(term(ag::diff_y(p), ag::diff_y(ig)));
  if (parts.empty()) return ag::scale(ag::sum(p), 0.0);
  ag::Var total = parts.size() == 1 ? parts[0] : ag::add(parts[0], parts[1]);
  if (reduction == Reduction::Mean) {
    const double count = double(sh.n) * sh.c * (double(sh.h) * (sh.w - 1) + double(sh.h - 1) * sh.w);
    total = ag::scale(total, 1.0 / count);
  }
  return total;
}

ag::Var total_loss(const LossTerms& t, const LossWeights& w) {
  require(t.cvae != nullptr, "total_loss: missing cvae term");
  std::vector<ag::Var> terms{t.cvae};
  std::vector<double> weights{1.0};
  if (t.depth) {
    terms.push_back(t.depth);
    weights.push_back(w.lambda1);
  }
  if (t.smooth) {
    terms.push_back(t.smooth);
    weights.push_back(w.lambda2);
  }
  return ag::weighted_sum(terms, weights);
}

}  // namespace probsal
