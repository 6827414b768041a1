#include <doctest.h>

#include <cmath>
#include <fstream>

#include "helpers.hpp"
#include "probsal/dataset.hpp"
#include "probsal/error.hpp"
#include "probsal/image_io.hpp"

using namespace probsal;
using namespace probsal::testing;
namespace fs = std::filesystem;

namespace {

Tensor pixel(double r, double g, double b) {
  Tensor t(Shape{1, 3, 1, 1});
  t[0] = r;
  t[1] = g;
  t[2] = b;
  return t;
}

// Written out from the piecewise sRGB definition independently of the library.
double srgb_to_linear(double c) { return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("to_intensity: extremes, branch boundary and validation") {
  CHECK(to_intensity(pixel(1, 1, 1)).ig.item() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(to_intensity(pixel(0, 0, 0)).ig.item() == 0.0);
  CHECK(to_intensity(pixel(0.04045, 0, 0)).ig.item() == doctest::Approx(0.2126 * (0.04045 / 12.92)).epsilon(1e-14));
  // The two branches nearly agree at the boundary.
  CHECK(std::abs(0.04045 / 12.92 - std::pow((0.04045 + 0.055) / 1.055, 2.4)) < 1e-4);
  CHECK_THROWS_AS(to_intensity(pixel(1.2, 0, 0)), InvalidArgument);
  CHECK_THROWS_AS(to_intensity(pixel(-0.1, 0, 0)), InvalidArgument);
}

TEST_CASE("to_intensity matches the channel-weighted linear luminance and is monotone") {
  std::mt19937_64 g(11);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 200; ++i) {
    const double r = u(g), gg = u(g), b = u(g);
    const double expect = 0.2126 * srgb_to_linear(r) + 0.7152 * srgb_to_linear(gg) + 0.0722 * srgb_to_linear(b);
    CHECK(to_intensity(pixel(r, gg, b)).ig.item() == doctest::Approx(expect).epsilon(1e-13));
  }
  for (int ch = 0; ch < 3; ++ch) {
    double prev = -1;
    for (int k = 0; k <= 100; ++k) {
      double v[3] = {0.3, 0.3, 0.3};
      v[ch] = k / 100.0;
      const double cur = to_intensity(pixel(v[0], v[1], v[2])).ig.item();
      CHECK(cur > prev);
      prev = cur;
    }
  }
}

TEST_CASE("render_scene is a pure function of the config") {
  SynthConfig c;
  c.seed = 5;
  c.size = 32;
  const Scene a = render_scene(c, 3), b = render_scene(c, 3);
  CHECK(a.sample.rgb.vec() == b.sample.rgb.vec());
  CHECK(a.sample.depth.vec() == b.sample.depth.vec());
  CHECK(a.rank == b.rank);
  const Scene other = render_scene(c, 4);
  CHECK(other.sample.rgb.vec() != a.sample.rgb.vec());
}

TEST_CASE("zero depth noise leaves depth equal to the clean depth") {
  SynthConfig c;
  c.size = 32;
  c.depth_noise_std = 0.0;
  for (int i = 0; i < 5; ++i) {
    const Scene s = render_scene(c, i);
    CHECK(s.sample.depth.vec() == s.sample.clean_depth->vec());
  }
}

TEST_CASE("clean depth respects z-order at every covered pixel") {
  SynthConfig c;
  c.size = 48;
  c.min_objects = 3;
  c.max_objects = 5;
  for (int i = 0; i < 8; ++i) {
    const Scene s = render_scene(c, i);
    const Tensor& d = *s.sample.clean_depth;
    for (int y = 0; y < c.size; ++y) {
      for (int x = 0; x < c.size; ++x) {
        // Walk the scene graph: the winner is the nearest object with at least half coverage.
        double expect = s.background_depth.at(y, x);
        for (std::size_t o = 0; o < s.objects.size(); ++o) {
          if (s.coverage[o].at(y, x) >= 0.5 && s.objects[o].depth >= expect) expect = s.objects[o].depth;
        }
        if (d.at(y, x) != expect) FAIL("z-order violated at " << y << "," << x << " in scene " << i);
      }
    }
    validate(s.sample);
  }
}

TEST_CASE("ranking is by score with creation-order tie-break and GT is the top object") {
  SynthConfig c;
  c.size = 48;
  c.min_objects = c.max_objects = 4;
  for (int i = 0; i < 5; ++i) {
    const Scene s = render_scene(c, i);
    for (std::size_t k = 1; k < s.rank.size(); ++k) {
      const double prev = s.scores[s.rank[k - 1]], cur = s.scores[s.rank[k]];
      CHECK(prev >= cur);
      if (prev == cur) CHECK(s.rank[k - 1] < s.rank[k]);
    }
    CHECK(s.sample.annotations[0].vec() == s.visible[s.rank[0]].vec());
    CHECK(s.sample.object_masks.size() == 4);
  }
}

TEST_CASE("synth config validation") {
  SynthConfig c;
  c.size = 8;
  CHECK_THROWS_AS(validate(c), InvalidArgument);
  c = {};
  c.min_objects = 3;
  c.max_objects = 2;
  CHECK_THROWS_AS(validate(c), InvalidArgument);
  c = {};
  c.max_objects = 6;
  CHECK_THROWS_AS(validate(c), InvalidArgument);
  c = {};
  c.depth_noise_std = -0.1;
  CHECK_THROWS_AS(validate(c), InvalidArgument);
}

TEST_CASE("synthetic set round-trips through files and manifest") {
  const fs::path dir = scratch_dir("synth_roundtrip");
  SynthConfig c;
  c.seed = 9;
  c.count = 10;
  c.size = 32;
  const DatasetManifest m = generate_synthetic(c, dir / "a");
  const DatasetManifest back = load_manifest(dir / "a" / "manifest.jsonl");
  REQUIRE(back.entries.size() == 10);
  for (int i = 0; i < 10; ++i) {
    const Scene s = render_scene(c, i);
    const RgbdSample loaded = load_sample(back, back.entries[i]);
    CHECK(loaded.id == s.sample.id);
    CHECK(loaded.rgb.shape() == s.sample.rgb.shape());
    CHECK(max_abs_diff(loaded.rgb, s.sample.rgb) <= 0.5 / 255 + 1e-12);
    CHECK(max_abs_diff(loaded.depth, s.sample.depth) <= 0.5 / 255 + 1e-12);
    CHECK(loaded.annotations[0].vec() == s.sample.annotations[0].vec());
  }
  for (int ch = 0; ch < 3; ++ch) CHECK(back.mean_rgb[ch] == doctest::Approx(m.mean_rgb[ch]).epsilon(1e-12));

  // Same seed twice gives byte-identical files.
  generate_synthetic(c, dir / "b");
  for (const auto& e : m.entries) {
    CHECK(slurp(dir / "a" / e.rgb) == slurp(dir / "b" / e.rgb));
    CHECK(slurp(dir / "a" / e.depth) == slurp(dir / "b" / e.depth));
  }
  CHECK(slurp(dir / "a" / "manifest.jsonl") == slurp(dir / "b" / "manifest.jsonl"));
}

TEST_CASE("manifest validation rejects duplicates and missing files") {
  const fs::path dir = scratch_dir("manifest_errors");
  SynthConfig c;
  c.count = 2;
  c.size = 16;
  DatasetManifest m = generate_synthetic(c, dir);
  DatasetManifest dup = m;
  dup.entries[1].id = dup.entries[0].id;
  CHECK_THROWS_AS(validate(dup), InvalidArgument);
  CHECK_THROWS_AS(save_manifest(dup, dir / "dup.jsonl"), InvalidArgument);
  {
    // A hand-edited file with a repeated line is rejected on load.
    std::ifstream in(dir / "manifest.jsonl");
    std::string line, last;
    std::ofstream out(dir / "dup.jsonl");
    while (std::getline(in, line)) out << (last = line) << "\n";
    out << last << "\n";
  }
  CHECK_THROWS(load_manifest(dir / "dup.jsonl"));

  DatasetManifest missing = m;
  missing.entries[0].depth = "depth/nope.png";
  CHECK_THROWS_AS(validate(missing), IoError);
  CHECK_THROWS_AS(load_sample(missing, missing.entries[0]), IoError);
  CHECK_THROWS_AS(m.find("absent"), NotFoundError);
  CHECK_THROWS_AS(load_manifest(dir / "absent.jsonl"), IoError);

  std::ofstream(dir / "bad.jsonl") << "{not json\n";
  CHECK_THROWS_AS(load_manifest(dir / "bad.jsonl"), FormatError);
}

TEST_CASE("size mismatch against the manifest is rejected") {
  const fs::path dir = scratch_dir("manifest_size");
  SynthConfig c;
  c.count = 1;
  c.size = 16;
  DatasetManifest m = generate_synthetic(c, dir);
  m.entries[0].height = 20;
  m.entries[0].width = 20;
  CHECK_THROWS_AS(load_sample(m, m.entries[0]), FormatError);
}

TEST_CASE("gray PNG round-trip error is bounded by quantization") {
  const fs::path dir = scratch_dir("png");
  std::mt19937_64 g(3);
  const Tensor t = random_tensor({1, 1, 13, 17}, g, 0, 1);
  io::write_gray(dir / "g.png", t);
  const Tensor back = io::read_gray(dir / "g.png");
  CHECK(max_abs_diff(back, t) <= 1.0 / 255);
  CHECK(back.vec() == io::quantize8(t).vec());
  const Tensor rgb = random_tensor({1, 3, 5, 7}, g, 0, 1);
  io::write_rgb(dir / "c.png", rgb);
  CHECK(max_abs_diff(io::read_rgb(dir / "c.png"), rgb) <= 1.0 / 255);
}

TEST_CASE("sample validation catches broken invariants") {
  SynthConfig c;
  c.size = 16;
  RgbdSample s = render_scene(c, 0).sample;
  validate(s);
  RgbdSample bad = s;
  bad.annotations[0].at(0, 0) = 0.5;
  CHECK_THROWS_AS(validate(bad), InvalidArgument);
  bad = s;
  bad.depth = Tensor::map(8, 8);
  CHECK_THROWS_AS(validate(bad), InvalidArgument);
  bad = s;
  bad.annotations.clear();
  CHECK_THROWS_AS(validate(bad), InvalidArgument);
}

TEST_CASE("benchmark folder layout is scanned by stem") {
  const fs::path dir = scratch_dir("bench");
  for (const char* sub : {"RGB", "depth", "GT"}) fs::create_directories(dir / sub);
  std::mt19937_64 g(4);
  for (const char* stem : {"a1", "b2"}) {
    io::write_rgb(dir / "RGB" / (std::string(stem) + ".jpg"), random_tensor({1, 3, 16, 16}, g, 0, 1));
    io::write_gray(dir / "depth" / (std::string(stem) + ".png"), random_tensor({1, 1, 16, 16}, g, 0, 1));
    io::write_gray(dir / "GT" / (std::string(stem) + ".png"), binary_map(16, 16, g));
  }
  const DatasetManifest m = scan_benchmark_layout(dir, Split::Test, DepthPolarity::NearSmall);
  REQUIRE(m.entries.size() == 2);
  CHECK(m.entries[0].id == "a1");
  const RgbdSample s = load_sample(m, m.entries[1]);
  const Tensor raw = io::read_gray(dir / "depth" / "b2.png");
  CHECK(s.depth.at(3, 4) == doctest::Approx(1.0 - raw.at(3, 4)));
}
