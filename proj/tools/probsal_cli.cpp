// Command-line front end. Talks to the library only through probsal.h.
#include <CLI11.hpp>

#include <cstdio>
#include <string>
#include <vector>

#include "probsal/probsal.h"

namespace {

int check(probsal_status s) {
  if (s != PROBSAL_OK) std::fprintf(stderr, "probsal: %s: %s\n", probsal_status_name(s), probsal_last_error());
  return int(s);
}

std::vector<const char*> c_strings(const std::vector<std::string>& v) {
  std::vector<const char*> out;
  for (const auto& s : v) out.push_back(s.c_str());
  return out;
}

void print_epoch(int epoch, double lr, double loss, void*) {
  std::printf("{\"epoch\": %d, \"lr\": %.10g, \"loss\": %.10g}\n", epoch, lr, loss);
  std::fflush(stdout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probabilistic RGB-D saliency: synthetic data, training, sampling and evaluation"};
  app.require_subcommand(1);
  int rc = 0;

  // synth
  probsal_synth_params sp;
  probsal_synth_defaults(&sp);
  std::string synth_out, synth_prefix = "syn";
  bool synth_test = false;
  auto* synth = app.add_subcommand("synth", "render deterministic synthetic RGB-D scenes");
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--count", sp.count, "number of scenes")->capture_default_str();
  synth->add_option("--size", sp.size, "image side in pixels")->capture_default_str();
  synth->add_option("--seed", sp.seed)->capture_default_str();
  synth->add_option("--min-objects", sp.min_objects)->capture_default_str();
  synth->add_option("--max-objects", sp.max_objects)->capture_default_str();
  synth->add_option("--noise", sp.depth_noise_std, "depth noise std")->capture_default_str();
  synth->add_option("--gt-objects", sp.gt_objects, "top-ranked objects in the GT")->capture_default_str();
  synth->add_option("--max-holes", sp.max_holes)->capture_default_str();
  synth->add_option("--first-index", sp.first_index)->capture_default_str();
  synth->add_option("--prefix", synth_prefix, "id prefix")->capture_default_str();
  synth->add_flag("--test", synth_test, "mark as test split");
  synth->callback([&] {
    sp.id_prefix = synth_prefix.c_str();
    sp.test_split = synth_test ? 1 : 0;
    rc = check(probsal_synth(&sp, synth_out.c_str()));
  });

  // augment
  std::string aug_manifest, aug_oracle = "synthetic", aug_out;
  int aug_rounds = 3;
  auto* augment = app.add_subcommand("augment", "build the four-annotation training set by iterative hiding");
  augment->add_option("--manifest", aug_manifest)->required();
  augment->add_option("--oracle", aug_oracle, "synthetic | files:DIR | model:CKPT")->capture_default_str();
  augment->add_option("--rounds", aug_rounds)->capture_default_str();
  augment->add_option("--out", aug_out, "output manifest path")->required();
  augment->callback([&] {
    rc = check(probsal_augment(aug_manifest.c_str(), aug_oracle.c_str(), aug_rounds, aug_out.c_str()));
  });

  // train
  std::string train_cfg, train_manifest, train_out, train_ckpt;
  std::vector<std::string> train_set;
  bool train_dump = false;
  auto* trn = app.add_subcommand("train", "train a model; logs one JSON line per epoch");
  trn->add_option("--config", train_cfg, "flat key = value config file");
  trn->add_option("--set", train_set, "key=value override (repeatable)");
  trn->add_option("--manifest", train_manifest, "training manifest (overrides the config)");
  trn->add_option("--out", train_out, "directory for log.jsonl and checkpoint.bin");
  trn->add_option("--ckpt", train_ckpt, "extra path for the final checkpoint");
  trn->add_flag("--dump-config", train_dump, "print the resolved config and exit");
  trn->callback([&] {
    std::vector<std::string> ov = train_set;
    if (!train_manifest.empty()) ov.push_back("manifest=" + train_manifest);
    if (!train_out.empty()) ov.push_back("out_dir=" + train_out);
    const auto cs = c_strings(ov);
    const char* cfg = train_cfg.empty() ? nullptr : train_cfg.c_str();
    if (train_dump) {
      std::vector<char> buf(1 << 16);
      rc = check(probsal_config_dump(cfg, cs.data(), int(cs.size()), buf.data(), int(buf.size())));
      if (rc == 0) std::fputs(buf.data(), stdout);
      return;
    }
    probsal_model* model = nullptr;
    rc = check(probsal_train(cfg, cs.data(), int(cs.size()), print_epoch, nullptr, &model));
    if (rc == 0 && !train_ckpt.empty()) rc = check(probsal_model_save(model, train_ckpt.c_str()));
    if (rc == 0) std::printf("{\"final_loss\": %.17g}\n", probsal_model_final_loss(model));
    probsal_model_free(model);
  });

  // sample
  std::string smp_ckpt, smp_manifest, smp_out;
  int smp_c = 10;
  std::uint64_t smp_seed = 0;
  auto* smp = app.add_subcommand("sample", "draw C predictions per image and their consensus");
  smp->add_option("--ckpt", smp_ckpt)->required();
  smp->add_option("--manifest", smp_manifest)->required();
  smp->add_option("--samples", smp_c)->capture_default_str();
  smp->add_option("--seed", smp_seed)->capture_default_str();
  smp->add_option("--out", smp_out)->required();
  smp->callback([&] {
    probsal_model* model = nullptr;
    rc = check(probsal_model_load(smp_ckpt.c_str(), &model));
    if (rc == 0) rc = check(probsal_sample(model, smp_manifest.c_str(), smp_c, smp_seed, smp_out.c_str()));
    probsal_model_free(model);
  });

  // consensus
  std::string con_dir, con_out, con_id;
  int con_c = 10;
  auto* con = app.add_subcommand("consensus", "majority-vote fusion of sampled maps");
  con->add_option("--pred-dir", con_dir)->required();
  con->add_option("--samples", con_c)->capture_default_str();
  con->add_option("--id", con_id, "fuse {id}_{c}.png instead of the first C files");
  con->add_option("--out", con_out)->required();
  con->callback([&] {
    rc = check(probsal_consensus_files(con_dir.c_str(), con_id.empty() ? nullptr : con_id.c_str(), con_c,
                                       con_out.c_str()));
  });

  // eval
  std::string ev_dir, ev_manifest, ev_out;
  auto* ev = app.add_subcommand("eval", "score {id}.png predictions against annotation 0");
  ev->add_option("--pred-dir", ev_dir)->required();
  ev->add_option("--manifest", ev_manifest)->required();
  ev->add_option("--out", ev_out, "report.json")->required();
  ev->callback([&] {
    probsal_report* r = nullptr;
    rc = check(probsal_eval(ev_dir.c_str(), ev_manifest.c_str(), ev_out.c_str(), &r));
    if (rc == 0) {
      double m[5];
      probsal_report_means(r, m);
      std::printf("{\"images\": %d, \"mae\": %.6f, \"f_mean\": %.6f, \"e_mean\": %.6f, \"s\": %.6f, \"f_adaptive\": %.6f}\n",
                  probsal_report_size(r), m[0], m[1], m[2], m[3], m[4]);
    }
    probsal_report_free(r);
  });

  // curves
  std::string cv_report, cv_out, cv_png;
  auto* cv = app.add_subcommand("curves", "export the 256-threshold F/E curves");
  cv->add_option("--report", cv_report)->required();
  cv->add_option("--out", cv_out, "curves.csv")->required();
  cv->add_option("--png", cv_png, "optional plot");
  cv->callback([&] {
    rc = check(probsal_curves(cv_report.c_str(), cv_out.c_str(), cv_png.empty() ? nullptr : cv_png.c_str()));
  });

  // ablate
  std::string ab_variant, ab_cfg, ab_test, ab_out;
  std::vector<std::string> ab_set;
  int ab_c = 10;
  auto* ab = app.add_subcommand("ablate", "train and score one baseline variant");
  ab->add_option("--variant", ab_variant, "vae | mhead | mcdropout | no-depthcorr | cvae | K=N")->required();
  ab->add_option("--config", ab_cfg);
  ab->add_option("--set", ab_set, "key=value override (repeatable)");
  ab->add_option("--test-manifest", ab_test)->required();
  ab->add_option("--samples", ab_c)->capture_default_str();
  ab->add_option("--out", ab_out);
  ab->callback([&] {
    const auto cs = c_strings(ab_set);
    double m[6];
    rc = check(probsal_ablate(ab_cfg.empty() ? nullptr : ab_cfg.c_str(), cs.data(), int(cs.size()),
                              ab_variant.c_str(), ab_test.c_str(), ab_c, ab_out.empty() ? nullptr : ab_out.c_str(), m));
    if (rc == 0) {
      std::printf("{\"variant\": \"%s\", \"mae\": %.6f, \"f_mean\": %.6f, \"e_mean\": %.6f, \"s\": %.6f, "
                  "\"f_adaptive\": %.6f, \"sample_variance\": %.6g}\n",
                  ab_variant.c_str(), m[0], m[1], m[2], m[3], m[4], m[5]);
    }
  });

  CLI11_PARSE(app, argc, argv);
  return rc;
}
