#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "probsal/dataset.hpp"

namespace probsal {

inline constexpr int kCurveThresholds = 256;
inline constexpr double kBetaSquared = 0.3;
using Curve = std::array<double, kCurveThresholds>;

// Threshold i of the 256-point sweep is i / 256; a pixel is foreground when p > t.
double curve_threshold(int i);

double mae(const Tensor& p, const Tensor& y);

struct CurveMeasure {
  double mean = 0.0;
  Curve curve{};
};

CurveMeasure f_measure(const Tensor& p, const Tensor& y);
// F-measure at the adaptive threshold (consensus module's rule).
double adaptive_f_measure(const Tensor& p, const Tensor& y);
CurveMeasure e_measure(const Tensor& p, const Tensor& y);
// Enhanced alignment of one binary map against the GT.
double e_measure_binary(const Tensor& b, const Tensor& y);
double s_measure(const Tensor& p, const Tensor& y);

struct ImageMetrics {
  double mae = 0.0;
  double f_mean = 0.0;
  double e_mean = 0.0;
  double s = 0.0;
  double f_adaptive = 0.0;
};

struct ImageEvaluation {
  std::string id;
  ImageMetrics metrics;
  Curve f_curve{};
  Curve e_curve{};
};

ImageEvaluation evaluate_image(const std::string& id, const Tensor& p, const Tensor& y);

struct MetricReport {
  std::vector<std::pair<std::string, ImageMetrics>> per_image;  // manifest order
  ImageMetrics dataset_mean;
  Curve f_curve{};
  Curve e_curve{};
};

MetricReport aggregate(const std::vector<ImageEvaluation>& images);

// Reads pred_dir/{id}.png for every manifest entry and scores it against
// annotation 0. Missing predictions are a NotFound error listing every id.
MetricReport evaluate_dataset(const std::filesystem::path& pred_dir, const DatasetManifest& manifest);

nlohmann::json to_json(const MetricReport& r);
MetricReport report_from_json(const nlohmann::json& j);
void write_report(const MetricReport& r, const std::filesystem::path& path);
MetricReport read_report(const std::filesystem::path& path);
void write_report_csv(const MetricReport& r, const std::filesystem::path& path);
// threshold,f,e rows.
void write_curves_csv(const MetricReport& r, const std::filesystem::path& path);
void render_curves_png(const MetricReport& r, const std::filesystem::path& path);

}  // namespace probsal
