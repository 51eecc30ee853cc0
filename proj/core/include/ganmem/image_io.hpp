#pragma once

#include <string>
#include <vector>

#include "ganmem/tensor.hpp"

namespace ganmem {

// Binary PPM (P6) output. Images are [C,H,W] (C = 1 or 3) in [-1,1].
void write_ppm(const std::string& path, const Tensor& image);

// Tile [N,C,H,W] samples into one image, `cols` per row, 2px gutter.
void write_image_grid(const std::string& path, const Tensor& images, int cols);

// Minimal line plots for metric curves; deterministic output bytes.
struct Curve {
  std::string name;
  std::vector<double> xs, ys;
};

void write_curve_plot(const std::string& path, const std::vector<Curve>& curves,
                      int width = 480, int height = 320);

}  // namespace ganmem
