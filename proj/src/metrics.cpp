#include "probsal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "probsal/consensus.hpp"
#include "probsal/error.hpp"
#include "probsal/image_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace probsal {

namespace {

constexpr double kEps = 2.220446049250313e-16;

void check_pair(const Tensor& p, const Tensor& y, const char* what) {
  require(p.shape() == y.shape(), std::string(what) + ": prediction " + p.shape().str() + " vs GT " + y.shape().str());
  require(p.numel() > 0, std::string(what) + ": empty maps");
}

double f_of_binary(const Tensor& p, const Tensor& y, double t) {
  double tp = 0, pos = 0, gt = 0;
  for (std::size_t i = 0; i < p.numel(); ++i) {
    const bool b = p[i] > t;
    const bool g = y[i] > 0.5;
    pos += b;
    gt += g;
    tp += b && g;
  }
  const double prec = tp / (pos + 1e-12);
  const double rec = tp / (gt + 1e-12);
  return (1 + kBetaSquared) * prec * rec / (kBetaSquared * prec + rec + 1e-12);
}

Tensor binarize(const Tensor& p, double t) {
  Tensor b(p.shape());
  for (std::size_t i = 0; i < p.numel(); ++i) b[i] = p[i] > t ? 1.0 : 0.0;
  return b;
}

// Mean and std of x over pixels where mask holds.
std::pair<double, double> masked_stats(const Tensor& x, const Tensor& mask, bool want) {
  double n = 0, s = 0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    if ((mask[i] > 0.5) == want) {
      s += x[i];
      n += 1;
    }
  }
  if (n == 0) return {0.0, 0.0};
  const double m = s / n;
  double v = 0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    if ((mask[i] > 0.5) == want) v += (x[i] - m) * (x[i] - m);
  }
  // Sample standard deviation, as MATLAB's std().
  const double sd = n > 1 ? std::sqrt(v / (n - 1)) : 0.0;
  return {m, sd};
}

double object_score(double mean, double sd) { return 2.0 * mean / (mean * mean + 1.0 + sd + kEps); }

double s_object(const Tensor& p, const Tensor& y) {
  Tensor inv(p.shape());
  for (std::size_t i = 0; i < p.numel(); ++i) inv[i] = 1.0 - p[i];
  const auto [fg_m, fg_sd] = masked_stats(p, y, true);
  const auto [bg_m, bg_sd] = masked_stats(inv, y, false);
  const double u = y.mean();
  return u * object_score(fg_m, fg_sd) + (1 - u) * object_score(bg_m, bg_sd);
}

// Structural similarity of one block [y0,y1) x [x0,x1).
double block_ssim(const Tensor& p, const Tensor& g, int y0, int y1, int x0, int x1) {
  const double n = double(y1 - y0) * (x1 - x0);
  double mx = 0, my = 0;
  for (int r = y0; r < y1; ++r) {
    for (int c = x0; c < x1; ++c) {
      mx += p.at(r, c);
      my += g.at(r, c);
    }
  }
  mx /= n;
  my /= n;
  double vx = 0, vy = 0, cxy = 0;
  for (int r = y0; r < y1; ++r) {
    for (int c = x0; c < x1; ++c) {
      const double a = p.at(r, c) - mx, b = g.at(r, c) - my;
      vx += a * a;
      vy += b * b;
      cxy += a * b;
    }
  }
  vx /= (n - 1 + kEps);
  vy /= (n - 1 + kEps);
  cxy /= (n - 1 + kEps);
  const double alpha = 4 * mx * my * cxy;
  const double beta = (mx * mx + my * my) * (vx + vy);
  if (alpha != 0) return alpha / (beta + kEps);
  return beta == 0 ? 1.0 : 0.0;
}

double s_region(const Tensor& p, const Tensor& y) {
  const int h = y.h(), w = y.w();
  double total = 0, sx = 0, sy = 0;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double v = y.at(r, c);
      total += v;
      sx += v * (c + 1);
      sy += v * (r + 1);
    }
  }
  // Split point counts columns/rows in the left/top blocks (1-based centroid).
  int cx, cy;
  if (total <= 0) {
    cx = int(std::lround(w / 2.0));
    cy = int(std::lround(h / 2.0));
  } else {
    cx = int(std::lround(sx / total));
    cy = int(std::lround(sy / total));
  }
  cx = std::clamp(cx, 0, w);
  cy = std::clamp(cy, 0, h);
  const double area = double(h) * w;
  const int ys[3] = {0, cy, h};
  const int xs[3] = {0, cx, w};
  double q = 0;
  for (int by = 0; by < 2; ++by) {
    for (int bx = 0; bx < 2; ++bx) {
      const int y0 = ys[by], y1 = ys[by + 1], x0 = xs[bx], x1 = xs[bx + 1];
      if (y1 <= y0 || x1 <= x0) continue;
      const double wgt = double(y1 - y0) * (x1 - x0) / area;
      q += wgt * block_ssim(p, y, y0, y1, x0, x1);
    }
  }
  return q;
}

json metrics_json(const ImageMetrics& m) {
  return {{"mae", m.mae}, {"f_mean", m.f_mean}, {"e_mean", m.e_mean}, {"s", m.s}, {"f_adaptive", m.f_adaptive}};
}

ImageMetrics metrics_from_json(const json& j) {
  ImageMetrics m;
  m.mae = j.at("mae").get<double>();
  m.f_mean = j.at("f_mean").get<double>();
  m.e_mean = j.at("e_mean").get<double>();
  m.s = j.at("s").get<double>();
  m.f_adaptive = j.value("f_adaptive", 0.0);
  return m;
}

}  // namespace

double curve_threshold(int i) { return double(i) / kCurveThresholds; }

double mae(const Tensor& p, const Tensor& y) {
  check_pair(p, y, "mae");
  double s = 0;
  for (std::size_t i = 0; i < p.numel(); ++i) s += std::abs(p[i] - y[i]);
  return s / double(p.numel());
}

CurveMeasure f_measure(const Tensor& p, const Tensor& y) {
  check_pair(p, y, "f_measure");
  CurveMeasure out;
  for (int i = 0; i < kCurveThresholds; ++i) out.curve[i] = f_of_binary(p, y, curve_threshold(i));
  for (double v : out.curve) out.mean += v;
  out.mean /= kCurveThresholds;
  return out;
}

double adaptive_f_measure(const Tensor& p, const Tensor& y) {
  check_pair(p, y, "adaptive_f_measure");
  return f_of_binary(p, y, adaptive_threshold_value(p));
}

double e_measure_binary(const Tensor& b, const Tensor& y) {
  check_pair(b, y, "e_measure");
  const double my = y.mean();
  const double mb = b.mean();
  if (my == 0.0) return 1.0 - mb;
  if (my == 1.0) return mb;
  double total = 0;
  for (std::size_t i = 0; i < b.numel(); ++i) {
    const double fy = y[i] - my;
    const double fb = b[i] - mb;
    const double xi = 2 * fy * fb / (fy * fy + fb * fb + kEps);
    total += (xi + 1) * (xi + 1) / 4;
  }
  return total / double(b.numel());
}

CurveMeasure e_measure(const Tensor& p, const Tensor& y) {
  check_pair(p, y, "e_measure");
  CurveMeasure out;
  for (int i = 0; i < kCurveThresholds; ++i) out.curve[i] = e_measure_binary(binarize(p, curve_threshold(i)), y);
  for (double v : out.curve) out.mean += v;
  out.mean /= kCurveThresholds;
  return out;
}

double s_measure(const Tensor& p, const Tensor& y) {
  check_pair(p, y, "s_measure");
  const double my = y.mean();
  if (my == 0.0) return std::clamp(1.0 - p.mean(), 0.0, 1.0);
  if (my == 1.0) return std::clamp(p.mean(), 0.0, 1.0);
  const double q = 0.5 * s_object(p, y) + 0.5 * s_region(p, y);
  return std::clamp(q, 0.0, 1.0);
}

ImageEvaluation evaluate_image(const std::string& id, const Tensor& p, const Tensor& y) {
  ImageEvaluation ev;
  ev.id = id;
  const CurveMeasure f = f_measure(p, y);
  const CurveMeasure e = e_measure(p, y);
  ev.metrics = {mae(p, y), f.mean, e.mean, s_measure(p, y), adaptive_f_measure(p, y)};
  ev.f_curve = f.curve;
  ev.e_curve = e.curve;
  return ev;
}

MetricReport aggregate(const std::vector<ImageEvaluation>& images) {
  MetricReport r;
  if (images.empty()) return r;
  const double n = double(images.size());
  for (const auto& ev : images) {
    r.per_image.emplace_back(ev.id, ev.metrics);
    r.dataset_mean.mae += ev.metrics.mae / n;
    r.dataset_mean.f_mean += ev.metrics.f_mean / n;
    r.dataset_mean.e_mean += ev.metrics.e_mean / n;
    r.dataset_mean.s += ev.metrics.s / n;
    r.dataset_mean.f_adaptive += ev.metrics.f_adaptive / n;
    for (int i = 0; i < kCurveThresholds; ++i) {
      r.f_curve[i] += ev.f_curve[i] / n;
      r.e_curve[i] += ev.e_curve[i] / n;
    }
  }
  return r;
}

MetricReport evaluate_dataset(const fs::path& pred_dir, const DatasetManifest& manifest) {
  std::vector<std::string> missing;
  for (const auto& e : manifest.entries) {
    if (!fs::exists(pred_dir / (e.id + ".png"))) missing.push_back(e.id);
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& id : missing) list += (list.empty() ? "" : ", ") + id;
    throw NotFoundError("missing predictions in " + pred_dir.string() + " for: " + list);
  }
  std::vector<ImageEvaluation> evs;
  for (const auto& e : manifest.entries) {
    Tensor y = io::read_gray(manifest.resolve(e.annotations[0]));
    for (auto& v : y.vec()) v = v >= 0.5 ? 1.0 : 0.0;
    Tensor p = io::read_gray(pred_dir / (e.id + ".png"));
    if (p.shape() != y.shape()) p = io::resize(p, y.h(), y.w());
    evs.push_back(evaluate_image(e.id, p, y));
  }
  return aggregate(evs);
}

json to_json(const MetricReport& r) {
  json per = json::array();
  for (const auto& [id, m] : r.per_image) {
    json j = metrics_json(m);
    j["id"] = id;
    per.push_back(j);
  }
  return {{"per_image", per},
          {"dataset_mean", metrics_json(r.dataset_mean)},
          {"curves", {{"thresholds", kCurveThresholds}, {"f", r.f_curve}, {"e", r.e_curve}}}};
}

MetricReport report_from_json(const json& j) {
  MetricReport r;
  try {
    for (const auto& item : j.at("per_image")) r.per_image.emplace_back(item.at("id").get<std::string>(), metrics_from_json(item));
    r.dataset_mean = metrics_from_json(j.at("dataset_mean"));
    const auto& c = j.at("curves");
    const auto f = c.at("f").get<std::vector<double>>();
    const auto e = c.at("e").get<std::vector<double>>();
    if (f.size() != kCurveThresholds || e.size() != kCurveThresholds) throw FormatError("curve arrays must have 256 entries");
    std::copy(f.begin(), f.end(), r.f_curve.begin());
    std::copy(e.begin(), e.end(), r.e_curve.begin());
  } catch (const json::exception& ex) {
    throw FormatError(std::string("malformed metric report: ") + ex.what());
  }
  return r;
}

void write_report(const MetricReport& r, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report " + path.string());
  out << to_json(r).dump(2) << '\n';
}

MetricReport read_report(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open report " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return report_from_json(j);
}

void write_report_csv(const MetricReport& r, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << std::setprecision(10) << "id,mae,f_mean,e_mean,s,f_adaptive\n";
  auto row = [&](const std::string& id, const ImageMetrics& m) {
    out << id << ',' << m.mae << ',' << m.f_mean << ',' << m.e_mean << ',' << m.s << ',' << m.f_adaptive << '\n';
  };
  for (const auto& [id, m] : r.per_image) row(id, m);
  row("mean", r.dataset_mean);
}

void write_curves_csv(const MetricReport& r, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << std::setprecision(10) << "threshold,f,e\n";
  for (int i = 0; i < kCurveThresholds; ++i) {
    out << curve_threshold(i) << ',' << r.f_curve[i] << ',' << r.e_curve[i] << '\n';
  }
}

void render_curves_png(const MetricReport& r, const fs::path& path) {
  const int w = 560, h = 400, margin = 40;
  cv::Mat img(h, w, CV_8UC3, cv::Scalar(255, 255, 255));
  auto pt = [&](int i, double v) {
    const double x = margin + (w - 2.0 * margin) * i / (kCurveThresholds - 1);
    const double y = h - margin - (h - 2.0 * margin) * std::clamp(v, 0.0, 1.0);
    return cv::Point(int(x), int(y));
  };
  cv::rectangle(img, {margin, margin}, {w - margin, h - margin}, cv::Scalar(0, 0, 0), 1);
  for (int i = 1; i < kCurveThresholds; ++i) {
    cv::line(img, pt(i - 1, r.f_curve[i - 1]), pt(i, r.f_curve[i]), cv::Scalar(200, 60, 0), 2, cv::LINE_AA);
    cv::line(img, pt(i - 1, r.e_curve[i - 1]), pt(i, r.e_curve[i]), cv::Scalar(0, 0, 200), 2, cv::LINE_AA);
  }
  cv::putText(img, "F", {w - margin + 8, margin + 14}, cv::FONT_HERSHEY_SIMPLEX, 0.5, cv::Scalar(200, 60, 0), 1);
  cv::putText(img, "E", {w - margin + 8, margin + 34}, cv::FONT_HERSHEY_SIMPLEX, 0.5, cv::Scalar(0, 0, 200), 1);
  cv::putText(img, "threshold", {w / 2 - 30, h - 12}, cv::FONT_HERSHEY_SIMPLEX, 0.45, cv::Scalar(0, 0, 0), 1);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), img)) throw IoError("cannot write " + path.string());
}

}  // namespace probsal
