#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace probsal {

// Every tensor is 4-D, NCHW. Vectors are (N, K, 1, 1); scalars (1, 1, 1, 1).
struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  std::size_t numel() const { return std::size_t(n) * c * h * w; }
  std::size_t plane() const { return std::size_t(h) * w; }
  std::string str() const;
  friend bool operator==(const Shape&, const Shape&) = default;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor(Shape{}, v); }
  static Tensor map(int h, int w, double fill = 0.0) { return Tensor(Shape{1, 1, h, w}, fill); }

  const Shape& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int c() const { return shape_.c; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> span() { return data_; }
  std::span<const double> span() const { return data_; }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
  double at(int n, int c, int y, int x) const { return data_[index(n, c, y, x)]; }
  // (y, x) access on the first plane; for H×W maps.
  double& at(int y, int x) { return data_[std::size_t(y) * shape_.w + x]; }
  double at(int y, int x) const { return data_[std::size_t(y) * shape_.w + x]; }

  double item() const;
  void fill(double v);
  Tensor& operator+=(const Tensor& other);
  Tensor& operator*=(double s);

  double sum() const;
  double mean() const;
  double min() const;
  double max() const;
  bool all_finite() const;
  bool all_in(double lo, double hi) const;

  // Channel slice [c0, c0 + count) of batch item n as an independent tensor.
  Tensor channels(int c0, int count, int n = 0) const;
  Tensor batch_item(int n) const;
  Tensor reshaped(Shape s) const;

 private:
  std::size_t index(int n, int c, int y, int x) const {
    return ((std::size_t(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }

  Shape shape_{0, 0, 0, 0};
  std::vector<double> data_;
};

double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace probsal
