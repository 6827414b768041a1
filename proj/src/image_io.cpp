#include "probsal/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "probsal/error.hpp"

namespace probsal::io {

namespace {

std::uint8_t to_byte(double v) { return std::uint8_t(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

cv::Mat imread_checked(const std::filesystem::path& path, int flags) {
  if (!std::filesystem::exists(path)) throw IoError("missing image file: " + path.string());
  cv::Mat m = cv::imread(path.string(), flags);
  if (m.empty()) throw FormatError("cannot decode image: " + path.string());
  if (m.depth() == CV_16U) m.convertTo(m, CV_8U, 1.0 / 257.0);
  return m;
}

void imwrite_checked(const std::filesystem::path& path, const cv::Mat& m) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), m);
  } catch (const cv::Exception& e) {
    throw IoError("cannot write " + path.string() + ": " + e.what());
  }
  if (!ok) throw IoError("cannot write " + path.string());
}

}  // namespace

Tensor read_rgb(const std::filesystem::path& path) {
  cv::Mat m = imread_checked(path, cv::IMREAD_COLOR);
  Tensor t(Shape{1, 3, m.rows, m.cols});
  for (int y = 0; y < m.rows; ++y) {
    const auto* row = m.ptr<cv::Vec3b>(y);
    for (int x = 0; x < m.cols; ++x) {
      // OpenCV stores BGR.
      t.at(0, 0, y, x) = row[x][2] / 255.0;
      t.at(0, 1, y, x) = row[x][1] / 255.0;
      t.at(0, 2, y, x) = row[x][0] / 255.0;
    }
  }
  return t;
}

Tensor read_gray(const std::filesystem::path& path) {
  cv::Mat m = imread_checked(path, cv::IMREAD_GRAYSCALE);
  Tensor t(Shape{1, 1, m.rows, m.cols});
  for (int y = 0; y < m.rows; ++y) {
    const auto* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < m.cols; ++x) t.at(y, x) = row[x] / 255.0;
  }
  return t;
}

void write_rgb(const std::filesystem::path& path, const Tensor& rgb) {
  require(rgb.n() == 1 && rgb.c() == 3, "write_rgb expects (1,3,H,W), got " + rgb.shape().str());
  cv::Mat m(rgb.h(), rgb.w(), CV_8UC3);
  for (int y = 0; y < rgb.h(); ++y) {
    auto* row = m.ptr<cv::Vec3b>(y);
    for (int x = 0; x < rgb.w(); ++x) {
      row[x] = cv::Vec3b(to_byte(rgb.at(0, 2, y, x)), to_byte(rgb.at(0, 1, y, x)), to_byte(rgb.at(0, 0, y, x)));
    }
  }
  imwrite_checked(path, m);
}

void write_gray(const std::filesystem::path& path, const Tensor& gray) {
  require(gray.n() == 1 && gray.c() == 1, "write_gray expects (1,1,H,W), got " + gray.shape().str());
  cv::Mat m(gray.h(), gray.w(), CV_8UC1);
  for (int y = 0; y < gray.h(); ++y) {
    auto* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < gray.w(); ++x) row[x] = to_byte(gray.at(y, x));
  }
  imwrite_checked(path, m);
}

Tensor quantize8(const Tensor& t) {
  Tensor q(t.shape());
  for (std::size_t i = 0; i < t.numel(); ++i) q[i] = to_byte(t[i]) / 255.0;
  return q;
}

Tensor resize(const Tensor& t, int h, int w) {
  if (t.h() == h && t.w() == w) return t;
  Tensor out(Shape{t.n(), t.c(), h, w});
  for (int n = 0; n < t.n(); ++n) {
    for (int c = 0; c < t.c(); ++c) {
      cv::Mat src(t.h(), t.w(), CV_64F, const_cast<double*>(t.data()) + (std::size_t(n) * t.c() + c) * t.shape().plane());
      cv::Mat dst(h, w, CV_64F, out.data() + (std::size_t(n) * t.c() + c) * out.shape().plane());
      cv::resize(src, dst, cv::Size(w, h), 0, 0, cv::INTER_LINEAR);
    }
  }
  return out;
}

}  // namespace probsal::io
