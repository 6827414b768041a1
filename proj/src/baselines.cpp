#include "probsal/baselines.hpp"

#include "probsal/error.hpp"
#include "probsal/image_io.hpp"

namespace fs = std::filesystem;

namespace probsal {

ag::Var vae_kl(const GaussianLatent& prior) {
  return kl_divergence(prior, GaussianLatent::standard_normal(prior.batch(), prior.K()));
}

MHeadLoss mhead_loss(const std::vector<ag::Var>& head_logits, const ag::Var& y) {
  require(!head_logits.empty(), "mhead_loss: no heads");
  std::vector<ag::Var> terms;
  MHeadLoss out;
  for (const auto& l : head_logits) {
    terms.push_back(ag::bce_with_logits(l, y));
    out.per_head.push_back(terms.back()->value().item());
  }
  out.loss = ag::min_of(terms, &out.winner);
  return out;
}

PredictionSet mcdropout_sample(const Model& model, const RgbdSample& sample, int n, double rate, Rng& rng) {
  require(n >= 1, "mcdropout_sample: n must be >= 1");
  require(rate >= 0.0 && rate < 1.0, "mcdropout_sample: rate must be in [0, 1)");
  ag::NoGradGuard guard;
  const ModelInput in = make_input(sample);
  const ag::Var dprime = model.refine_depth(in);
  const DropoutCtx drop{rate, &rng};
  std::vector<Tensor> gray;
  for (int i = 0; i < n; ++i) {
    const ag::Var sd = model.features(in, dprime, drop);
    const ag::Var logits = model.predict(sd, model.zero_latent_map(sd), 0, sample.height(), sample.width(), drop);
    gray.push_back(ag::sigmoid(logits)->value());
  }
  return consensus(std::move(gray));
}

PredictionSet mcdropout_sample(const Checkpoint& ckpt, const RgbdSample& sample, int n, double rate, Rng& rng) {
  require(ckpt.model != nullptr, "checkpoint without model");
  return mcdropout_sample(*ckpt.model, sample, n, rate, rng);
}

AblationSpec parse_ablation(const std::string& s) {
  AblationSpec a;
  a.label = s;
  if (s.rfind("K=", 0) == 0) {
    try {
      std::size_t used = 0;
      a.K = std::stoi(s.substr(2), &used);
      if (used != s.size() - 2) throw std::invalid_argument(s);
    } catch (const std::exception&) {
      throw InvalidArgument("bad latent size in '" + s + "'");
    }
    require(a.K >= 2 && a.K % 2 == 0, "K must be even and >= 2");
    return a;
  }
  a.variant = variant_from_string(s);
  return a;
}

TrainConfig apply_ablation(TrainConfig c, const AblationSpec& a) {
  c.variant.variant = a.variant;
  if (a.K > 0) c.K = a.K;
  validate(c);
  return c;
}

AblationResult run_ablation(const DatasetManifest& train_set, const DatasetManifest& test_set, TrainConfig c,
                            const AblationSpec& a, int C, const fs::path& out_dir) {
  require(C >= 1, "run_ablation: C must be >= 1");
  AblationResult res;
  res.spec = a;
  c = apply_ablation(std::move(c), a);
  if (!out_dir.empty()) c.out_dir = out_dir.string();
  res.training = train(train_set, c);

  Rng rng(c.seed ^ 0xAB1A7E);
  std::vector<ImageEvaluation> evs;
  double var_sum = 0;
  const auto test = load_all(test_set, c.image_size);
  for (const auto& s : test) {
    PredictionSet p = sample_predictions(res.training.checkpoint, s, C, rng);
    var_sum += mean_pixel_variance(p.gray);
    if (!out_dir.empty()) io::write_gray(out_dir / "pred" / (s.id + ".png"), p.consensus_gray);
    evs.push_back(evaluate_image(s.id, p.consensus_gray, s.annotations[0]));
  }
  res.report = aggregate(evs);
  res.mean_pixel_variance = test.empty() ? 0.0 : var_sum / double(test.size());
  if (!out_dir.empty()) write_report(res.report, out_dir / "report.json");
  return res;
}

}  // namespace probsal
