// Exercises the shared library through its C header only.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "probsal/probsal.h"

namespace fs = std::filesystem;

namespace {

fs::path work_dir(const std::string& name) {
  const char* base = std::getenv("PROBSAL_TEST_TMP");
  const fs::path dir = (base ? fs::path(base) : fs::temp_directory_path() / "probsal_capi") / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

struct Synth {
  fs::path dir;
  fs::path manifest;
};

Synth make_set(const fs::path& root, int count, int first_index) {
  probsal_synth_params p;
  probsal_synth_defaults(&p);
  p.count = count;
  p.size = 16;
  p.first_index = first_index;
  REQUIRE(probsal_synth(&p, root.c_str()) == PROBSAL_OK);
  return {root, root / "manifest.jsonl"};
}

void count_epochs(int, double, double, void* user) { ++*static_cast<int*>(user); }

}  // namespace

TEST_CASE("status names and version") {
  CHECK(std::string(probsal_status_name(PROBSAL_OK)) == "ok");
  CHECK(std::string(probsal_version()).size() > 0);
}

TEST_CASE("errors map to codes with a message") {
  probsal_manifest* m = nullptr;
  CHECK(probsal_manifest_load("/nonexistent/manifest.jsonl", &m) == PROBSAL_E_IO);
  CHECK(m == nullptr);
  CHECK(std::string(probsal_last_error()).find("manifest") != std::string::npos);
  CHECK(probsal_manifest_load(nullptr, &m) == PROBSAL_E_INVALID_ARGUMENT);

  probsal_synth_params p;
  probsal_synth_defaults(&p);
  p.size = 4;
  CHECK(probsal_synth(&p, work_dir("bad_synth").c_str()) == PROBSAL_E_INVALID_ARGUMENT);

  const char* bad[] = {"K=7"};
  char buf[16];
  CHECK(probsal_config_dump(nullptr, bad, 1, buf, sizeof buf) == PROBSAL_E_INVALID_ARGUMENT);
}

TEST_CASE("schedule through the C API") {
  const char* over[] = {"lr=1e-4", "lr_decay=0.9"};
  double lr[3];
  REQUIRE(probsal_lr_schedule(nullptr, over, 2, 3, lr) == PROBSAL_OK);
  CHECK(lr[0] == 1e-4);
  CHECK(lr[1] == doctest::Approx(9e-5));
  CHECK(lr[2] == doctest::Approx(8.1e-5));
}

TEST_CASE("synth, augment, train, sample, eval, curves end to end") {
  const fs::path dir = work_dir("e2e");
  const Synth train_set = make_set(dir / "train", 3, 0);
  const Synth test_set = make_set(dir / "test", 2, 100);

  probsal_manifest* m = nullptr;
  REQUIRE(probsal_manifest_load(train_set.manifest.c_str(), &m) == PROBSAL_OK);
  CHECK(probsal_manifest_size(m) == 3);
  CHECK(probsal_manifest_annotation_count(m, 0) == 1);
  const std::string first = probsal_manifest_id(m, 0);
  probsal_manifest_free(m);

  const fs::path aug = dir / "aug" / "manifest.jsonl";
  REQUIRE(probsal_augment(train_set.manifest.c_str(), "synthetic", 3, aug.c_str()) == PROBSAL_OK);
  REQUIRE(probsal_manifest_load(aug.c_str(), &m) == PROBSAL_OK);
  CHECK(probsal_manifest_annotation_count(m, 0) == 4);
  probsal_manifest_free(m);

  const std::string man = "manifest=" + aug.string();
  const std::string out = "out_dir=" + (dir / "run").string();
  const char* over[] = {man.c_str(), out.c_str(), "image_size=16", "epochs=2", "batch=2"};
  int epochs = 0;
  probsal_model* model = nullptr;
  REQUIRE_MESSAGE(probsal_train(nullptr, over, 5, count_epochs, &epochs, &model) == PROBSAL_OK, probsal_last_error());
  CHECK(epochs == 2);
  CHECK(probsal_model_image_size(model) == 16);
  double recomputed = 0, recorded = 0;
  REQUIRE(probsal_model_probe(model, &recomputed, &recorded) == PROBSAL_OK);
  CHECK(std::abs(recomputed - recorded) <= 1e-6);

  const fs::path ckpt = dir / "model.bin";
  REQUIRE(probsal_model_save(model, ckpt.c_str()) == PROBSAL_OK);
  probsal_model_free(model);
  REQUIRE(probsal_model_load(ckpt.c_str(), &model) == PROBSAL_OK);

  const fs::path pred = dir / "pred";
  REQUIRE(probsal_sample(model, test_set.manifest.c_str(), 3, 7, pred.c_str()) == PROBSAL_OK);
  probsal_model_free(model);
  REQUIRE(probsal_manifest_load(test_set.manifest.c_str(), &m) == PROBSAL_OK);
  const std::string tid = probsal_manifest_id(m, 0);
  probsal_manifest_free(m);
  CHECK(fs::exists(pred / (tid + "_2.png")));
  CHECK(fs::exists(pred / (tid + ".png")));
  CHECK(fs::exists(pred / "depth" / (tid + ".png")));

  REQUIRE(probsal_consensus_files(pred.c_str(), tid.c_str(), 3, (dir / "fused.png").c_str()) == PROBSAL_OK);
  CHECK(fs::exists(dir / "fused.png"));

  probsal_report* rep = nullptr;
  const fs::path report = dir / "report.json";
  REQUIRE(probsal_eval(pred.c_str(), test_set.manifest.c_str(), report.c_str(), &rep) == PROBSAL_OK);
  CHECK(probsal_report_size(rep) == 2);
  double means[5];
  REQUIRE(probsal_report_means(rep, means) == PROBSAL_OK);
  for (double v : means) CHECK((v >= 0.0 && v <= 1.0));
  probsal_report_free(rep);

  REQUIRE(probsal_report_load(report.c_str(), &rep) == PROBSAL_OK);
  double again[5];
  probsal_report_means(rep, again);
  for (int i = 0; i < 5; ++i) CHECK(again[i] == means[i]);
  probsal_report_free(rep);

  REQUIRE(probsal_curves(report.c_str(), (dir / "curves.csv").c_str(), (dir / "curves.png").c_str()) == PROBSAL_OK);
  CHECK(fs::file_size(dir / "curves.csv") > 0);
  CHECK(fs::exists(dir / "curves.png"));

  // Evaluating against a manifest whose ids have no predictions.
  CHECK(probsal_eval(pred.c_str(), train_set.manifest.c_str(), nullptr, &rep) == PROBSAL_E_NOT_FOUND);
  CHECK(std::string(probsal_last_error()).find(first) != std::string::npos);
}

TEST_CASE("ablation through the C API") {
  const fs::path dir = work_dir("ablate");
  const Synth train_set = make_set(dir / "train", 2, 0);
  const Synth test_set = make_set(dir / "test", 2, 50);
  const std::string man = "manifest=" + train_set.manifest.string();
  const char* over[] = {man.c_str(), "image_size=16", "max_steps=2", "batch=1"};
  double out[6];
  REQUIRE_MESSAGE(probsal_ablate(nullptr, over, 4, "mhead", test_set.manifest.c_str(), 3, (dir / "mhead").c_str(), out) ==
                      PROBSAL_OK,
                  probsal_last_error());
  CHECK(out[5] >= 0.0);
  CHECK(fs::exists(dir / "mhead" / "report.json"));
  CHECK(probsal_ablate(nullptr, over, 4, "K=5", test_set.manifest.c_str(), 3, (dir / "k5").c_str(), out) ==
        PROBSAL_E_INVALID_ARGUMENT);
}
