#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numeric>

#include "helpers.hpp"
#include "probsal/error.hpp"
#include "probsal/image_io.hpp"
#include "probsal/metrics.hpp"

using namespace probsal;
using namespace probsal::testing;
namespace fs = std::filesystem;

namespace {

using Grid = std::vector<std::vector<double>>;

Grid to_grid(const Tensor& t) {
  Grid g(t.h(), std::vector<double>(t.w()));
  for (int y = 0; y < t.h(); ++y)
    for (int x = 0; x < t.w(); ++x) g[y][x] = t.at(y, x);
  return g;
}

Grid sub(const Grid& g, int r0, int r1, int c0, int c1) {
  Grid out;
  for (int r = r0; r < r1; ++r) out.emplace_back(g[r].begin() + c0, g[r].begin() + c1);
  return out;
}

std::vector<double> flat(const Grid& g) {
  std::vector<double> v;
  for (const auto& row : g) v.insert(v.end(), row.begin(), row.end());
  return v;
}

double vmean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size()); }

double vstd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = vmean(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / double(v.size() - 1));
}

// Structure measure transcribed from the published reference code, written
// against nested vectors so it shares nothing with the library.
double s_measure_reference(const Tensor& pred, const Tensor& gt_t) {
  constexpr double eps = 2.220446049250313e-16;
  const Grid p = to_grid(pred), gt = to_grid(gt_t);
  const int rows = int(gt.size()), cols = int(gt[0].size());
  const double y = vmean(flat(gt));
  if (y == 0) return 1 - vmean(flat(p));
  if (y == 1) return vmean(flat(p));

  auto object = [&](const std::vector<double>& vals) {
    const double x = vmean(vals);
    return 2 * x / (x * x + 1 + vstd(vals) + eps);
  };
  std::vector<double> fg, bg;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) (gt[r][c] > 0.5 ? fg.push_back(p[r][c]) : bg.push_back(1 - p[r][c]));
  const double s_obj = y * object(fg) + (1 - y) * object(bg);

  double total = 0, xs = 0, ys = 0;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      total += gt[r][c];
      xs += gt[r][c] * (c + 1);
      ys += gt[r][c] * (r + 1);
    }
  const int X = int(std::round(xs / total)), Y = int(std::round(ys / total));
  auto ssim = [&](const Grid& a, const Grid& b) {
    const auto va = flat(a), vb = flat(b);
    const double N = double(va.size());
    const double x = vmean(va), yy = vmean(vb);
    double sx = 0, sy = 0, sxy = 0;
    for (std::size_t i = 0; i < va.size(); ++i) {
      sx += (va[i] - x) * (va[i] - x);
      sy += (vb[i] - yy) * (vb[i] - yy);
      sxy += (va[i] - x) * (vb[i] - yy);
    }
    sx /= N - 1 + eps;
    sy /= N - 1 + eps;
    sxy /= N - 1 + eps;
    const double alpha = 4 * x * yy * sxy, beta = (x * x + yy * yy) * (sx + sy);
    if (alpha != 0) return alpha / (beta + eps);
    return beta == 0 ? 1.0 : 0.0;
  };
  const double area = double(rows) * cols;
  const double w1 = X * Y / area, w2 = (cols - X) * Y / area, w3 = X * (rows - Y) / area, w4 = 1 - w1 - w2 - w3;
  const double s_reg = w1 * ssim(sub(p, 0, Y, 0, X), sub(gt, 0, Y, 0, X)) +
                       w2 * ssim(sub(p, 0, Y, X, cols), sub(gt, 0, Y, X, cols)) +
                       w3 * ssim(sub(p, Y, rows, 0, X), sub(gt, Y, rows, 0, X)) +
                       w4 * ssim(sub(p, Y, rows, X, cols), sub(gt, Y, rows, X, cols));
  return std::max(0.0, 0.5 * s_obj + 0.5 * s_reg);
}

// Blob GT that keeps the centroid well inside the image.
Tensor blob_gt(int n, std::mt19937_64& g) {
  std::uniform_real_distribution<double> u(0.3, 0.7), r(0.15, 0.3);
  const double cx = u(g) * n, cy = u(g) * n, rad = r(g) * n;
  Tensor t = Tensor::map(n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) t.at(y, x) = (x - cx) * (x - cx) + (y - cy) * (y - cy) <= rad * rad;
  return t;
}

}  // namespace

TEST_CASE("MAE examples and complement symmetry") {
  std::mt19937_64 g(1);
  const Tensor y = binary_map(8, 8, g);
  CHECK(mae(y, y) == 0.0);
  Tensor inv = y;
  for (auto& v : inv.vec()) v = 1 - v;
  CHECK(mae(inv, y) == 1.0);
  CHECK(mae(Tensor::map(8, 8, 0.25), Tensor::map(8, 8)) == 0.25);
  const Tensor p = random_tensor({1, 1, 8, 8}, g, 0, 1);
  Tensor pi = p;
  for (auto& v : pi.vec()) v = 1 - v;
  CHECK(mae(p, y) == doctest::Approx(mae(pi, inv)).epsilon(1e-14));
  CHECK_THROWS_AS(mae(p, Tensor::map(4, 4)), InvalidArgument);
}

TEST_CASE("F-measure examples") {
  std::mt19937_64 g(2);
  const Tensor y = binary_map(8, 8, g);
  const CurveMeasure perfect = f_measure(y, y);
  for (double v : perfect.curve) CHECK(v == doctest::Approx(1.0));
  CHECK(f_measure(Tensor::map(8, 8), y).mean == 0.0);

  // 2 TP, 1 FP, 1 FN at t = 0.5, counted by hand.
  Tensor p = Tensor::map(4, 4, 0.1), gt = Tensor::map(4, 4);
  p.at(0, 0) = p.at(0, 1) = 0.9;  // TP
  gt.at(0, 0) = gt.at(0, 1) = 1;
  p.at(1, 1) = 0.9;  // FP
  gt.at(2, 2) = 1;   // FN
  const double prec = 2.0 / 3, rec = 2.0 / 3;
  const double expect = 1.3 * prec * rec / (0.3 * prec + rec);
  CHECK(expect == doctest::Approx(0.6667).epsilon(1e-4));
  CHECK(f_measure(p, gt).curve[128] == doctest::Approx(expect).epsilon(1e-10));
  CHECK(curve_threshold(128) == 0.5);
}

TEST_CASE("E-measure examples") {
  Tensor y = Tensor::map(2, 2);
  y.at(0, 0) = 1;
  CHECK(e_measure_binary(y, y) == doctest::Approx(1.0));
  // B = 1 - Y evaluated pixel by pixel.
  Tensor b = Tensor::map(2, 2, 1.0);
  b.at(0, 0) = 0;
  const double my = 0.25, mb = 0.75;
  double expect = 0;
  for (int i = 0; i < 4; ++i) {
    const double fy = y[i] - my, fb = b[i] - mb;
    const double xi = 2 * fy * fb / (fy * fy + fb * fb + 2.220446049250313e-16);
    expect += (xi + 1) * (xi + 1) / 4 / 4;
  }
  CHECK(e_measure_binary(b, y) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(e_measure_binary(Tensor::map(2, 2), Tensor::map(2, 2)) == 1.0);
  Tensor half = Tensor::map(2, 2);
  half.at(0, 0) = half.at(1, 1) = 1;
  CHECK(e_measure_binary(half, Tensor::map(2, 2)) == 0.5);
  CHECK(e_measure_binary(half, Tensor::map(2, 2, 1.0)) == 0.5);
  CHECK(e_measure(y, y).mean == doctest::Approx(1.0));
}

TEST_CASE("S-measure examples") {
  std::mt19937_64 g(3);
  const Tensor y = blob_gt(16, g);
  CHECK(s_measure(y, y) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s_measure(Tensor::map(4, 4), Tensor::map(4, 4)) == 1.0);
  CHECK(s_measure(Tensor::map(4, 4, 0.3), Tensor::map(4, 4)) == doctest::Approx(0.7));
  CHECK(s_measure(Tensor::map(4, 4, 0.3), Tensor::map(4, 4, 1.0)) == doctest::Approx(0.3));
}

TEST_CASE("S-measure agrees with the reference transcription") {
  std::mt19937_64 g(4);
  for (int t = 0; t < 200; ++t) {
    const Tensor y = blob_gt(20, g);
    Tensor p = random_tensor({1, 1, 20, 20}, g, 0, 1);
    if (t % 2) {
      // Correlated predictions exercise the high end of the range.
      for (std::size_t i = 0; i < p.numel(); ++i) p[i] = std::clamp(0.8 * y[i] + 0.3 * p[i] - 0.1, 0.0, 1.0);
    }
    CHECK(s_measure(p, y) == doctest::Approx(s_measure_reference(p, y)).epsilon(1e-12));
  }
}

TEST_CASE("all metrics stay in [0,1] and a perfect prediction scores (0,1,1,1)") {
  std::mt19937_64 g(5);
  for (int t = 0; t < 50; ++t) {
    const Tensor y = t % 5 == 0 ? binary_map(12, 12, g) : blob_gt(12, g);
    const Tensor p = random_tensor({1, 1, 12, 12}, g, 0, 1);
    const ImageMetrics m = evaluate_image("x", p, y).metrics;
    for (double v : {m.mae, m.f_mean, m.e_mean, m.s, m.f_adaptive}) CHECK((v >= 0.0 && v <= 1.0));
  }
  const Tensor y = blob_gt(16, g);
  const ImageEvaluation e = evaluate_image("y", y, y);
  CHECK(e.metrics.mae == 0.0);
  for (double v : e.f_curve) CHECK(v == doctest::Approx(1.0));
  CHECK(e.metrics.e_mean == doctest::Approx(1.0));
  CHECK(e.metrics.s == doctest::Approx(1.0));
}

TEST_CASE("curve metrics are unchanged by an 8-bit save of on-grid predictions") {
  const fs::path dir = scratch_dir("metrics_quant");
  std::mt19937_64 g(6);
  const Tensor y = blob_gt(16, g);
  const Tensor p = io::quantize8(random_tensor({1, 1, 16, 16}, g, 0, 1));
  io::write_gray(dir / "p.png", p);
  const Tensor back = io::read_gray(dir / "p.png");
  CHECK(f_measure(back, y).mean == f_measure(p, y).mean);
  CHECK(e_measure(back, y).mean == e_measure(p, y).mean);
}

TEST_CASE("evaluate_dataset averages per-image values without weighting") {
  const fs::path dir = scratch_dir("eval_dataset");
  DatasetManifest m;
  m.root = dir;
  std::mt19937_64 g(7);
  for (int i = 0; i < 2; ++i) {
    RgbdSample s;
    s.id = "img" + std::to_string(i);
    s.rgb = random_tensor({1, 3, 8, 8}, g, 0, 1);
    s.depth = random_tensor({1, 1, 8, 8}, g, 0, 1);
    s.annotations = {Tensor::map(8, 8)};
    m.entries.push_back(save_sample(s, dir));
    fs::create_directories(dir / "pred");
    io::write_gray(dir / "pred" / (s.id + ".png"), Tensor::map(8, 8, i == 0 ? 0.1 : 0.3));
  }
  const MetricReport r = evaluate_dataset(dir / "pred", m);
  REQUIRE(r.per_image.size() == 2);
  CHECK(r.per_image[0].second.mae == doctest::Approx(26.0 / 255));  // 0.1 stored as level 26
  CHECK(r.dataset_mean.mae == doctest::Approx((r.per_image[0].second.mae + r.per_image[1].second.mae) / 2));
  CHECK(r.dataset_mean.s == doctest::Approx((r.per_image[0].second.s + r.per_image[1].second.s) / 2));

  fs::remove(dir / "pred" / "img1.png");
  CHECK_THROWS_WITH_AS(evaluate_dataset(dir / "pred", m), doctest::Contains("img1"), NotFoundError);
}

TEST_CASE("dataset mean is the mean of independently computed images") {
  std::mt19937_64 g(8);
  std::vector<ImageEvaluation> evs;
  for (int i = 0; i < 5; ++i) evs.push_back(evaluate_image("i" + std::to_string(i), random_tensor({1, 1, 10, 10}, g, 0, 1), blob_gt(10, g)));
  const MetricReport r = aggregate(evs);
  double s = 0, f = 0;
  for (const auto& e : evs) {
    s += e.metrics.s / 5;
    f += e.f_curve[100] / 5;
  }
  CHECK(r.dataset_mean.s == doctest::Approx(s).epsilon(1e-14));
  CHECK(r.f_curve[100] == doctest::Approx(f).epsilon(1e-14));
}

TEST_CASE("report round-trips through JSON and writes curve CSV") {
  const fs::path dir = scratch_dir("report_json");
  std::mt19937_64 g(9);
  std::vector<ImageEvaluation> evs;
  for (int i = 0; i < 3; ++i) evs.push_back(evaluate_image("r" + std::to_string(i), random_tensor({1, 1, 10, 10}, g, 0, 1), blob_gt(10, g)));
  const MetricReport r = aggregate(evs);
  write_report(r, dir / "report.json");
  const MetricReport back = read_report(dir / "report.json");
  REQUIRE(back.per_image.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(back.per_image[i].first == r.per_image[i].first);
    CHECK(back.per_image[i].second.s == r.per_image[i].second.s);
    CHECK(back.per_image[i].second.mae == r.per_image[i].second.mae);
  }
  CHECK(back.f_curve == r.f_curve);
  CHECK(back.e_curve == r.e_curve);
  CHECK(back.dataset_mean.e_mean == r.dataset_mean.e_mean);

  write_curves_csv(r, dir / "curves.csv");
  std::ifstream in(dir / "curves.csv");
  std::string line;
  int rows = 0;
  std::getline(in, line);
  CHECK(line == "threshold,f,e");
  while (std::getline(in, line)) rows += !line.empty();
  CHECK(rows == kCurveThresholds);
}
