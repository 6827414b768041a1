#include "probsal/probsal.h"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <new>
#include <string>

#include "probsal/baselines.hpp"
#include "probsal/error.hpp"
#include "probsal/image_io.hpp"
#include "probsal/metrics.hpp"
#include "probsal/pipeline.hpp"

namespace fs = std::filesystem;
using namespace probsal;

struct probsal_manifest {
  DatasetManifest m;
};

struct probsal_model {
  Checkpoint ckpt;
  double final_loss = 0.0;
};

struct probsal_report {
  MetricReport r;
};

namespace {

thread_local std::string g_last_error;

template <class F>
probsal_status guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return PROBSAL_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return static_cast<probsal_status>(e.code());
  } catch (const fs::filesystem_error& e) {
    g_last_error = e.what();
    return PROBSAL_E_IO;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return PROBSAL_E_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return PROBSAL_E_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return PROBSAL_E_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  if (p == nullptr) throw InvalidArgument(std::string(what) + " must not be NULL");
}

TrainConfig make_config(const char* path, const char* const* overrides, int n) {
  TrainConfig c = path ? load_config(path) : TrainConfig::tiny();
  require(n >= 0 && (n == 0 || overrides != nullptr), "bad override list");
  for (int i = 0; i < n; ++i) {
    need(overrides[i], "override");
    const std::string kv = overrides[i];
    const auto eq = kv.find('=');
    require(eq != std::string::npos && eq > 0, "override '" + kv + "' is not key=value");
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t");
      const auto b = s.find_last_not_of(" \t");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    apply_override(c, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  validate(c);
  return c;
}

std::vector<fs::path> png_files(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) throw NotFoundError("no such directory " + dir.string());
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

extern "C" {

const char* probsal_version(void) { return "0.3.0"; }

const char* probsal_last_error(void) { return g_last_error.c_str(); }

const char* probsal_status_name(probsal_status s) {
  switch (s) {
    case PROBSAL_OK: return "ok";
    case PROBSAL_E_INVALID_ARGUMENT: return "invalid argument";
    case PROBSAL_E_IO: return "i/o error";
    case PROBSAL_E_FORMAT: return "format error";
    case PROBSAL_E_NUMERIC: return "numeric error";
    case PROBSAL_E_NOT_FOUND: return "not found";
    case PROBSAL_E_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void probsal_synth_defaults(probsal_synth_params* p) {
  if (p == nullptr) return;
  const SynthConfig d;
  p->seed = d.seed;
  p->count = d.count;
  p->size = d.size;
  p->min_objects = d.min_objects;
  p->max_objects = d.max_objects;
  p->depth_noise_std = d.depth_noise_std;
  p->gt_objects = d.gt_objects;
  p->max_holes = d.max_holes;
  p->first_index = d.first_index;
  p->test_split = 0;
  p->id_prefix = nullptr;
}

probsal_status probsal_synth(const probsal_synth_params* p, const char* out_dir) {
  return guarded([&] {
    need(p, "params");
    need(out_dir, "out_dir");
    SynthConfig c;
    c.seed = p->seed;
    c.count = p->count;
    c.size = p->size;
    c.min_objects = p->min_objects;
    c.max_objects = p->max_objects;
    c.depth_noise_std = p->depth_noise_std;
    c.gt_objects = p->gt_objects;
    c.max_holes = p->max_holes;
    c.first_index = p->first_index;
    c.split = p->test_split ? Split::Test : Split::Train;
    if (p->id_prefix) c.id_prefix = p->id_prefix;
    generate_synthetic(c, out_dir);
  });
}

probsal_status probsal_manifest_load(const char* path, probsal_manifest** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = nullptr;
    auto h = std::make_unique<probsal_manifest>();
    h->m = load_manifest(path);
    *out = h.release();
  });
}

void probsal_manifest_free(probsal_manifest* m) { delete m; }

int probsal_manifest_size(const probsal_manifest* m) { return m ? int(m->m.entries.size()) : 0; }

const char* probsal_manifest_id(const probsal_manifest* m, int index) {
  if (!m || index < 0 || index >= int(m->m.entries.size())) return nullptr;
  return m->m.entries[index].id.c_str();
}

int probsal_manifest_annotation_count(const probsal_manifest* m, int index) {
  if (!m || index < 0 || index >= int(m->m.entries.size())) return -1;
  return int(m->m.entries[index].annotations.size());
}

probsal_status probsal_augment(const char* manifest_path, const char* oracle, int rounds, const char* out_manifest) {
  return guarded([&] {
    need(manifest_path, "manifest_path");
    need(oracle, "oracle");
    need(out_manifest, "out_manifest");
    const DatasetManifest m = load_manifest(manifest_path);
    const auto o = make_oracle(oracle, m.mean_rgb);
    augment_manifest(m, *o, rounds, out_manifest);
  });
}

probsal_status probsal_config_dump(const char* config_path, const char* const* overrides, int n_overrides, char* buf,
                                   int buf_size) {
  return guarded([&] {
    need(buf, "buf");
    const std::string s = dump_config(make_config(config_path, overrides, n_overrides));
    require(buf_size > int(s.size()), "buffer too small: need " + std::to_string(s.size() + 1) + " bytes");
    std::memcpy(buf, s.c_str(), s.size() + 1);
  });
}

probsal_status probsal_lr_schedule(const char* config_path, const char* const* overrides, int n_overrides, int epochs,
                                   double* out) {
  return guarded([&] {
    need(out, "out");
    require(epochs >= 0, "epochs must be >= 0");
    const auto s = lr_schedule(make_config(config_path, overrides, n_overrides), epochs);
    std::copy(s.begin(), s.end(), out);
  });
}

probsal_status probsal_train(const char* config_path, const char* const* overrides, int n_overrides,
                             probsal_epoch_callback cb, void* user, probsal_model** out) {
  return guarded([&] {
    need(out, "out");
    *out = nullptr;
    const TrainConfig c = make_config(config_path, overrides, n_overrides);
    require(!c.manifest.empty(), "no training manifest configured (key 'manifest')");
    const DatasetManifest m = load_manifest(c.manifest);
    EpochCallback hook;
    if (cb) hook = [&](const EpochLog& e) { cb(e.epoch, e.lr, e.loss, user); };
    TrainResult r = train(m, c, hook);
    auto h = std::make_unique<probsal_model>();
    h->ckpt = std::move(r.checkpoint);
    h->final_loss = r.final_loss;
    *out = h.release();
  });
}

probsal_status probsal_model_load(const char* path, probsal_model** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = nullptr;
    auto h = std::make_unique<probsal_model>();
    h->ckpt = load_checkpoint(path);
    *out = h.release();
  });
}

probsal_status probsal_model_save(const probsal_model* m, const char* path) {
  return guarded([&] {
    need(m, "model");
    need(path, "path");
    save_checkpoint(m->ckpt, path);
  });
}

void probsal_model_free(probsal_model* m) { delete m; }

int probsal_model_image_size(const probsal_model* m) { return m ? m->ckpt.config.image_size : 0; }

double probsal_model_final_loss(const probsal_model* m) { return m ? m->final_loss : 0.0; }

probsal_status probsal_model_probe(const probsal_model* m, double* recomputed, double* recorded) {
  return guarded([&] {
    need(m, "model");
    if (recomputed) *recomputed = probe_loss(*m->ckpt.model, m->ckpt.config);
    if (recorded) *recorded = m->ckpt.probe_loss;
  });
}

probsal_status probsal_sample(const probsal_model* m, const char* manifest_path, int samples, uint64_t seed,
                              const char* out_dir) {
  return guarded([&] {
    need(m, "model");
    need(manifest_path, "manifest_path");
    need(out_dir, "out_dir");
    require(samples >= 1, "samples must be >= 1");
    const DatasetManifest man = load_manifest(manifest_path);
    const fs::path dir(out_dir);
    Rng rng(seed);
    for (const auto& e : man.entries) {
      const RgbdSample s = load_sample(man, e, m->ckpt.config.image_size);
      const PredictionSet p = sample_predictions(m->ckpt, s, samples, rng);
      for (int c = 0; c < p.size(); ++c) io::write_gray(dir / (s.id + "_" + std::to_string(c) + ".png"), p.gray[c]);
      io::write_gray(dir / (s.id + ".png"), p.consensus_gray);
      io::write_gray(dir / "depth" / (s.id + ".png"), refined_depth(*m->ckpt.model, s));
    }
  });
}

probsal_status probsal_consensus_files(const char* pred_dir, const char* id, int samples, const char* out_png) {
  return guarded([&] {
    need(pred_dir, "pred_dir");
    need(out_png, "out_png");
    require(samples >= 1, "samples must be >= 1");
    std::vector<fs::path> files;
    if (id) {
      for (int c = 0; c < samples; ++c) {
        const fs::path f = fs::path(pred_dir) / (std::string(id) + "_" + std::to_string(c) + ".png");
        if (!fs::exists(f)) throw NotFoundError("missing prediction " + f.string());
        files.push_back(f);
      }
    } else {
      files = png_files(pred_dir);
      if (int(files.size()) < samples) {
        throw NotFoundError(std::string(pred_dir) + " holds " + std::to_string(files.size()) + " PNG files, need " +
                            std::to_string(samples));
      }
      files.resize(samples);
    }
    std::vector<Tensor> maps;
    for (const auto& f : files) maps.push_back(io::read_gray(f));
    io::write_gray(out_png, consensus(std::move(maps)).consensus_gray);
  });
}

probsal_status probsal_eval(const char* pred_dir, const char* manifest_path, const char* report_path,
                            probsal_report** out) {
  return guarded([&] {
    need(pred_dir, "pred_dir");
    need(manifest_path, "manifest_path");
    if (out) *out = nullptr;
    MetricReport r = evaluate_dataset(pred_dir, load_manifest(manifest_path));
    if (report_path) write_report(r, report_path);
    if (out) *out = new probsal_report{std::move(r)};
  });
}

probsal_status probsal_report_load(const char* path, probsal_report** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = nullptr;
    *out = new probsal_report{read_report(path)};
  });
}

void probsal_report_free(probsal_report* r) { delete r; }

probsal_status probsal_report_means(const probsal_report* r, double out[5]) {
  return guarded([&] {
    need(r, "report");
    need(out, "out");
    const ImageMetrics& m = r->r.dataset_mean;
    out[0] = m.mae;
    out[1] = m.f_mean;
    out[2] = m.e_mean;
    out[3] = m.s;
    out[4] = m.f_adaptive;
  });
}

int probsal_report_size(const probsal_report* r) { return r ? int(r->r.per_image.size()) : 0; }

probsal_status probsal_curves(const char* report_path, const char* csv_out, const char* png_out) {
  return guarded([&] {
    need(report_path, "report_path");
    need(csv_out, "csv_out");
    const MetricReport r = read_report(report_path);
    write_curves_csv(r, csv_out);
    if (png_out) render_curves_png(r, png_out);
  });
}

probsal_status probsal_ablate(const char* config_path, const char* const* overrides, int n_overrides,
                              const char* variant, const char* test_manifest, int samples, const char* out_dir,
                              double out[6]) {
  return guarded([&] {
    need(variant, "variant");
    need(test_manifest, "test_manifest");
    const TrainConfig c = make_config(config_path, overrides, n_overrides);
    require(!c.manifest.empty(), "no training manifest configured (key 'manifest')");
    const AblationResult r = run_ablation(load_manifest(c.manifest), load_manifest(test_manifest), c,
                                          parse_ablation(variant), samples, out_dir ? fs::path(out_dir) : fs::path());
    if (out) {
      const ImageMetrics& m = r.report.dataset_mean;
      out[0] = m.mae;
      out[1] = m.f_mean;
      out[2] = m.e_mean;
      out[3] = m.s;
      out[4] = m.f_adaptive;
      out[5] = r.mean_pixel_variance;
    }
  });
}

}  // extern "C"
