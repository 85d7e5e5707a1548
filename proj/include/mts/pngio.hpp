#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mts/tensor.hpp"

namespace mts {

// Minimal PNG writer (8-bit RGB, zlib-compressed).
void write_png_rgb(const std::string& path, int width, int height, const std::vector<uint8_t>& rgb);

// 3x3 grid of axial slices: grayscale base volume with the heatmap overlaid
// in a hot colormap at the given alpha. Both grids are (D, H, W).
void write_heatmap_montage(const Tensor& base, const Tensor& heat, const std::string& path,
                           double alpha = 0.5);

}  // namespace mts
