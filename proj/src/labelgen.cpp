#include "probsal/labelgen.hpp"

#include <cmath>

#include "probsal/consensus.hpp"
#include "probsal/error.hpp"
#include "probsal/image_io.hpp"

namespace fs = std::filesystem;

namespace probsal {

namespace {

bool is_hidden_pixel(const Tensor& rgb, int y, int x, const Rgb& mean) {
  for (int c = 0; c < 3; ++c) {
    if (std::abs(rgb.at(0, c, y, x) - mean[c]) > 1e-12) return false;
  }
  return true;
}

}  // namespace

Tensor hide_region(const Tensor& rgb, const Tensor& mask, const Rgb& mean_rgb) {
  require(rgb.c() == 3 && rgb.n() == 1, "hide_region expects (1,3,H,W) rgb");
  require(mask.shape() == (Shape{1, 1, rgb.h(), rgb.w()}),
          "hide_region: mask " + mask.shape().str() + " does not match rgb " + rgb.shape().str());
  Tensor out = rgb;
  for (int y = 0; y < rgb.h(); ++y) {
    for (int x = 0; x < rgb.w(); ++x) {
      if (mask.at(y, x) > 0.5) {
        for (int c = 0; c < 3; ++c) out.at(0, c, y, x) = mean_rgb[c];
      }
    }
  }
  return out;
}

Tensor SyntheticRankOracle::predict(const RgbdSample& base, const Tensor& rgb, int /*round*/) const {
  require(!base.object_masks.empty(), base.id + ": synthetic_rank oracle needs ranked object masks");
  Tensor out = Tensor::map(rgb.h(), rgb.w());
  for (const auto& mask : base.object_masks) {
    double area = 0, hidden = 0;
    for (int y = 0; y < rgb.h(); ++y) {
      for (int x = 0; x < rgb.w(); ++x) {
        if (mask.at(y, x) <= 0.5) continue;
        area += 1;
        if (is_hidden_pixel(rgb, y, x, mean_rgb_)) hidden += 1;
      }
    }
    if (area == 0 || hidden >= 0.5 * area) continue;
    for (int y = 0; y < rgb.h(); ++y) {
      for (int x = 0; x < rgb.w(); ++x) {
        if (mask.at(y, x) > 0.5 && !is_hidden_pixel(rgb, y, x, mean_rgb_)) out.at(y, x) = 1.0;
      }
    }
    break;
  }
  return out;
}

Tensor FilePredictionOracle::predict(const RgbdSample& base, const Tensor& rgb, int round) const {
  const fs::path p = dir_ / (base.id + "_" + std::to_string(round) + ".png");
  Tensor m = io::read_gray(p);
  if (m.h() != rgb.h() || m.w() != rgb.w()) m = io::resize(m, rgb.h(), rgb.w());
  return m;
}

AugmentedSample augment(const RgbdSample& sample, const SaliencyOracle& oracle, const Rgb& mean_rgb, int rounds) {
  require(rounds >= 0, "rounds must be >= 0");
  require(!sample.annotations.empty(), sample.id + ": augment needs a canonical GT");
  AugmentedSample out;
  out.base = sample;
  out.annotations.push_back(sample.annotations[0]);
  Tensor current = sample.rgb;
  Tensor to_hide = sample.annotations[0];
  for (int r = 1; r <= rounds; ++r) {
    current = hide_region(current, to_hide, mean_rgb);
    out.hidden_rgbs.push_back(current);
    Tensor gray;
    try {
      gray = oracle.predict(sample, current, r);
    } catch (const Error& e) {
      throw Error(e.code(), sample.id + ": oracle failed in round " + std::to_string(r) + ": " + e.what());
    } catch (const std::exception& e) {
      throw Error(ErrorCode::Internal, sample.id + ": oracle failed in round " + std::to_string(r) + ": " + e.what());
    }
    if (gray.shape() != sample.annotations[0].shape()) {
      throw Error(ErrorCode::Format, sample.id + ": oracle returned shape " + gray.shape().str() + " in round " +
                                         std::to_string(r));
    }
    Tensor b = adaptive_threshold(gray);
    out.annotations.push_back(b);
    to_hide = std::move(b);
  }
  out.base.annotations = out.annotations;
  return out;
}

DatasetManifest augment_manifest(const DatasetManifest& in, const SaliencyOracle& oracle, int rounds,
                                 const fs::path& out_manifest) {
  DatasetManifest out;
  out.root = out_manifest.has_parent_path() ? out_manifest.parent_path() : fs::path(".");
  fs::create_directories(out.root);
  out.split = in.split;
  out.mean_rgb = in.mean_rgb;
  out.polarity = in.polarity;
  auto rebase = [&](const std::string& rel) {
    return fs::relative(fs::absolute(in.resolve(rel)), fs::absolute(out.root)).generic_string();
  };
  for (const auto& e : in.entries) {
    RgbdSample s = load_sample(in, e);
    AugmentedSample a = augment(s, oracle, in.mean_rgb, rounds);
    ManifestEntry ne = e;
    ne.rgb = rebase(e.rgb);
    ne.depth = rebase(e.depth);
    if (e.clean_depth) ne.clean_depth = rebase(*e.clean_depth);
    for (auto& om : ne.object_masks) om = rebase(om);
    ne.annotations = {rebase(e.annotations[0])};
    for (std::size_t k = 1; k < a.annotations.size(); ++k) {
      const std::string rel = "auged/" + e.id + "_" + std::to_string(k) + ".png";
      io::write_gray(out.root / rel, a.annotations[k]);
      ne.annotations.push_back(rel);
    }
    out.entries.push_back(std::move(ne));
  }
  save_manifest(out, out_manifest);
  return out;
}

}  // namespace probsal
