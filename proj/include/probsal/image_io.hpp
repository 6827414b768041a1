#pragma once

#include <filesystem>

#include "probsal/tensor.hpp"

namespace probsal::io {

// 8-bit PNG (or anything OpenCV decodes) <-> tensors in [0,1].
// RGB images are (1,3,H,W) in R,G,B channel order; gray maps (1,1,H,W).
Tensor read_rgb(const std::filesystem::path& path);
Tensor read_gray(const std::filesystem::path& path);
void write_rgb(const std::filesystem::path& path, const Tensor& rgb);
void write_gray(const std::filesystem::path& path, const Tensor& gray);

// Values are rounded to the nearest of 256 levels, as a save/load round-trip would.
Tensor quantize8(const Tensor& t);

// Bilinear resize of every channel; binary maps should be re-thresholded by the caller.
Tensor resize(const Tensor& t, int h, int w);

}  // namespace probsal::io
