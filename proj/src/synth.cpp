#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>

#include "probsal/dataset.hpp"
#include "probsal/error.hpp"
#include "probsal/image_io.hpp"
#include "probsal/rng.hpp"

namespace fs = std::filesystem;

namespace probsal {

namespace {

constexpr int kSuper = 4;  // supersampling factor per axis for anti-aliasing

bool inside(const SceneObject& o, double x, double y) {
  const double dx = x - o.cx, dy = y - o.cy;
  const double c = std::cos(o.angle), s = std::sin(o.angle);
  const double u = c * dx + s * dy;
  const double v = -s * dx + c * dy;
  switch (o.kind) {
    case ShapeKind::Ellipse:
      return (u * u) / (o.rx * o.rx) + (v * v) / (o.ry * o.ry) <= 1.0;
    case ShapeKind::Rectangle:
      return std::abs(u) <= o.rx && std::abs(v) <= o.ry;
    case ShapeKind::Triangle: {
      // Vertices on a circle of radius rx in the rotated frame.
      const double r = o.rx;
      const double pi = std::numbers::pi;
      double px[3], py[3];
      for (int k = 0; k < 3; ++k) {
        px[k] = r * std::cos(-pi / 2 + 2 * pi * k / 3);
        py[k] = r * std::sin(-pi / 2 + 2 * pi * k / 3);
      }
      bool pos = false, neg = false;
      for (int k = 0; k < 3; ++k) {
        const int j = (k + 1) % 3;
        const double cross = (px[j] - px[k]) * (v - py[k]) - (py[j] - py[k]) * (u - px[k]);
        pos = pos || cross > 0;
        neg = neg || cross < 0;
      }
      return !(pos && neg);
    }
  }
  return false;
}

Tensor coverage_of(const SceneObject& o, int size) {
  Tensor cov = Tensor::map(size, size);
  const double step = 1.0 / kSuper;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      int hits = 0;
      for (int sy = 0; sy < kSuper; ++sy) {
        for (int sx = 0; sx < kSuper; ++sx) {
          if (inside(o, x + (sx + 0.5) * step, y + (sy + 0.5) * step)) ++hits;
        }
      }
      cov.at(y, x) = double(hits) / (kSuper * kSuper);
    }
  }
  return cov;
}

double color_distance(const Rgb& a, const Rgb& b) {
  double s = 0;
  for (int c = 0; c < 3; ++c) s += (a[c] - b[c]) * (a[c] - b[c]);
  return std::sqrt(s);
}

std::uint64_t scene_seed(std::uint64_t seed, int index) {
  return seed ^ (0x9E3779B97F4A7C15ull * std::uint64_t(index + 1));
}

}  // namespace

void validate(const SynthConfig& c) {
  require(c.size >= 16, "synthetic size must be >= 16");
  require(c.count >= 0, "synthetic count must be >= 0");
  require(c.min_objects >= 1 && c.max_objects <= 5 && c.min_objects <= c.max_objects,
          "object count range must be a non-empty subrange of [1, 5]");
  require(c.depth_noise_std >= 0.0, "depth_noise_std must be >= 0");
  require(c.gt_objects >= 1, "gt_objects must be >= 1");
  require(c.max_holes >= 0, "max_holes must be >= 0");
}

Scene render_scene(const SynthConfig& c, int index) {
  validate(c);
  Rng rng(scene_seed(c.seed, c.first_index + index));
  const int n = c.size;
  const double nd = double(n);
  Scene scene;

  // Background: base colour, linear gradient and a low-amplitude sinusoidal texture.
  Rgb base{rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8)};
  const double gx = rng.uniform(-0.1, 0.1), gy = rng.uniform(-0.1, 0.1);
  const double fx = rng.uniform(0.2, 0.6), fy = rng.uniform(0.2, 0.6);
  const double phx = rng.uniform(0, 6.28), phy = rng.uniform(0, 6.28);
  Tensor rgb(Shape{1, 3, n, n});
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const double tex = 0.04 * std::sin(fx * x + phx) * std::sin(fy * y + phy);
      const double ramp = gx * (x / nd - 0.5) + gy * (y / nd - 0.5);
      for (int ch = 0; ch < 3; ++ch) rgb.at(0, ch, y, x) = std::clamp(base[ch] + ramp + tex, 0.0, 1.0);
    }
  }
  const double d0 = rng.uniform(0.05, 0.2), dslope = rng.uniform(0.0, 0.15);
  Tensor bg_depth = Tensor::map(n, n);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) bg_depth.at(y, x) = d0 + dslope * (y / nd);
  }

  const int count = rng.uniform_int(c.min_objects, c.max_objects);
  for (int i = 0; i < count; ++i) {
    SceneObject o;
    o.kind = static_cast<ShapeKind>(rng.uniform_int(0, 2));
    o.rx = rng.uniform(0.12, 0.22) * nd;
    o.ry = o.kind == ShapeKind::Triangle ? o.rx : o.rx * rng.uniform(0.6, 1.0);
    o.cx = rng.uniform(0.2, 0.8) * nd;
    o.cy = rng.uniform(0.2, 0.8) * nd;
    o.angle = rng.uniform(0.0, std::numbers::pi);
    for (int tries = 0; tries < 64; ++tries) {
      o.color = {rng.uniform(), rng.uniform(), rng.uniform()};
      if (color_distance(o.color, base) >= 0.35) break;
    }
    o.depth = rng.uniform(0.45, 0.95);
    scene.objects.push_back(o);
  }

  // Paint far to near; ties in depth keep creation order.
  std::vector<int> z(count);
  std::iota(z.begin(), z.end(), 0);
  std::stable_sort(z.begin(), z.end(), [&](int a, int b) { return scene.objects[a].depth < scene.objects[b].depth; });

  for (const auto& o : scene.objects) scene.coverage.push_back(coverage_of(o, n));
  Tensor clean = bg_depth;
  std::vector<int> owner(std::size_t(n) * n, -1);
  for (int oi : z) {
    const auto& o = scene.objects[oi];
    const Tensor& cov = scene.coverage[oi];
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        const double a = cov.at(y, x);
        if (a <= 0.0) continue;
        for (int ch = 0; ch < 3; ++ch) {
          double& v = rgb.at(0, ch, y, x);
          v = a * o.color[ch] + (1.0 - a) * v;
        }
        if (a >= 0.5) {
          clean.at(y, x) = o.depth;
          owner[std::size_t(y) * n + x] = oi;
        }
      }
    }
  }
  for (int i = 0; i < count; ++i) {
    Tensor vis = Tensor::map(n, n);
    for (std::size_t p = 0; p < owner.size(); ++p) vis[p] = owner[p] == i ? 1.0 : 0.0;
    scene.visible.push_back(std::move(vis));
  }

  // Saliency score: visible area x colour contrast x Gaussian centre prior.
  const double sigma_c = 0.25 * nd;
  for (int i = 0; i < count; ++i) {
    const Tensor& vis = scene.visible[i];
    double area = 0, sx = 0, sy = 0;
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        if (vis.at(y, x) > 0) {
          area += 1;
          sx += x + 0.5;
          sy += y + 0.5;
        }
      }
    }
    double score = 0.0;
    if (area > 0) {
      const double mx = sx / area - nd / 2, my = sy / area - nd / 2;
      const double centre = std::exp(-(mx * mx + my * my) / (2 * sigma_c * sigma_c));
      const double contrast = color_distance(scene.objects[i].color, base) / std::sqrt(3.0);
      score = (area / (nd * nd)) * contrast * centre;
    }
    scene.scores.push_back(score);
  }
  scene.rank.resize(count);
  std::iota(scene.rank.begin(), scene.rank.end(), 0);
  std::stable_sort(scene.rank.begin(), scene.rank.end(),
                   [&](int a, int b) { return scene.scores[a] > scene.scores[b]; });

  Tensor gt = Tensor::map(n, n);
  for (int r = 0; r < std::min(c.gt_objects, count); ++r) gt += scene.visible[scene.rank[r]];

  Tensor noisy = clean;
  if (c.depth_noise_std > 0.0) {
    for (auto& v : noisy.vec()) v += c.depth_noise_std * rng.normal();
    const int holes = rng.uniform_int(0, c.max_holes);
    for (int h = 0; h < holes; ++h) {
      const double hx = rng.uniform(0, nd), hy = rng.uniform(0, nd);
      const double hr = rng.uniform(2.0, std::max(2.0, 0.06 * nd));
      for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
          if ((x + 0.5 - hx) * (x + 0.5 - hx) + (y + 0.5 - hy) * (y + 0.5 - hy) <= hr * hr) noisy.at(y, x) = 0.0;
        }
      }
    }
    for (auto& v : noisy.vec()) v = std::clamp(v, 0.0, 1.0);
  }

  char id[64];
  std::snprintf(id, sizeof id, "%s%05d", c.id_prefix.c_str(), c.first_index + index);
  scene.sample.id = id;
  scene.sample.rgb = std::move(rgb);
  scene.sample.depth = std::move(noisy);
  scene.sample.clean_depth = std::move(clean);
  scene.sample.annotations = {std::move(gt)};
  for (int r : scene.rank) scene.sample.object_masks.push_back(scene.visible[r]);
  scene.background_depth = std::move(bg_depth);
  return scene;
}

DatasetManifest generate_synthetic(const SynthConfig& c, const fs::path& root) {
  validate(c);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec || !fs::is_directory(root)) throw IoError("cannot create synthetic root " + root.string());
  DatasetManifest m;
  m.root = root;
  m.split = c.split;
  std::vector<RgbdSample> written;
  for (int i = 0; i < c.count; ++i) {
    Scene s = render_scene(c, i);
    m.entries.push_back(save_sample(s.sample, root));
    written.push_back(load_sample(m, m.entries.back()));
  }
  m.mean_rgb = mean_rgb_of(written);
  save_manifest(m, root / "manifest.jsonl");
  return m;
}

}  // namespace probsal
