#include "probsal/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "probsal/error.hpp"

namespace probsal {

std::string Shape::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
         std::to_string(w) + ")";
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape), data_(shape.numel(), fill) {
  require(shape.n >= 0 && shape.c >= 0 && shape.h >= 0 && shape.w >= 0, "negative tensor dim");
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
  require(data_.size() == shape.numel(), "tensor data size does not match shape " + shape.str());
}

double Tensor::item() const {
  require(data_.size() == 1, "item() on tensor of shape " + shape_.str());
  return data_[0];
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor& Tensor::operator+=(const Tensor& other) {
  require(other.shape_ == shape_, "shape mismatch in += : " + shape_.str() + " vs " + other.shape_.str());
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (auto& v : data_) v *= s;
  return *this;
}

double Tensor::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

double Tensor::mean() const { return data_.empty() ? 0.0 : sum() / double(data_.size()); }

double Tensor::min() const {
  require(!data_.empty(), "min() of empty tensor");
  return *std::min_element(data_.begin(), data_.end());
}

double Tensor::max() const {
  require(!data_.empty(), "max() of empty tensor");
  return *std::max_element(data_.begin(), data_.end());
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

bool Tensor::all_in(double lo, double hi) const {
  return std::all_of(data_.begin(), data_.end(), [=](double v) { return v >= lo && v <= hi; });
}

Tensor Tensor::channels(int c0, int count, int n) const {
  require(c0 >= 0 && count >= 0 && c0 + count <= shape_.c && n >= 0 && n < shape_.n,
          "channel slice out of range");
  Tensor out(Shape{1, count, shape_.h, shape_.w});
  const std::size_t plane = shape_.plane();
  std::copy_n(data_.begin() + index(n, c0, 0, 0), count * plane, out.data_.begin());
  return out;
}

Tensor Tensor::batch_item(int n) const { return channels(0, shape_.c, n); }

Tensor Tensor::reshaped(Shape s) const {
  require(s.numel() == data_.size(), "reshape " + shape_.str() + " -> " + s.str());
  return Tensor(s, data_);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "max_abs_diff shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace probsal
