#include "ganmem/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace ganmem {

namespace {

unsigned char to_byte(double v) {
  double x = (v + 1.0) * 127.5;
  return static_cast<unsigned char>(std::clamp(x, 0.0, 255.0));
}

void write_p6(const std::string& path, const std::vector<unsigned char>& rgb,
              int w, int h) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "P6\n" << w << " " << h << "\n255\n";
  f.write(reinterpret_cast<const char*>(rgb.data()),
          static_cast<std::streamsize>(rgb.size()));
}

}  // namespace

void write_ppm(const std::string& path, const Tensor& image) {
  if (image.rank() != 3 || (image.dim(0) != 1 && image.dim(0) != 3))
    throw std::invalid_argument("write_ppm: need [1|3,H,W], got " + image.shape_str());
  int c = image.dim(0), h = image.dim(1), w = image.dim(2);
  std::vector<unsigned char> rgb(static_cast<size_t>(3) * h * w);
  int64_t hw = static_cast<int64_t>(h) * w;
  for (int64_t p = 0; p < hw; ++p)
    for (int ch = 0; ch < 3; ++ch)
      rgb[static_cast<size_t>(p) * 3 + ch] =
          to_byte(image[(c == 1 ? 0 : ch) * hw + p]);
  write_p6(path, rgb, w, h);
}

void write_image_grid(const std::string& path, const Tensor& images, int cols) {
  if (images.rank() != 4 || cols < 1)
    throw std::invalid_argument("write_image_grid: need [N,C,H,W] and cols >= 1");
  int n = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
  int rows = (n + cols - 1) / cols;
  const int g = 2;
  int gw = cols * w + (cols + 1) * g, gh = rows * h + (rows + 1) * g;
  std::vector<unsigned char> rgb(static_cast<size_t>(3) * gw * gh, 32);
  int64_t chw = static_cast<int64_t>(c) * h * w, hw = static_cast<int64_t>(h) * w;
  for (int i = 0; i < n; ++i) {
    int r0 = g + (i / cols) * (h + g), c0 = g + (i % cols) * (w + g);
    const double* img = images.data() + i * chw;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int ch = 0; ch < 3; ++ch)
          rgb[(static_cast<size_t>(r0 + y) * gw + (c0 + x)) * 3 + ch] =
              to_byte(img[(c == 1 ? 0 : ch) * hw + y * w + x]);
  }
  write_p6(path, rgb, gw, gh);
}

namespace {

const unsigned char kPalette[6][3] = {{200, 40, 40},  {40, 100, 200}, {40, 160, 60},
                                      {180, 130, 20}, {130, 50, 170}, {40, 160, 160}};

void put(std::vector<unsigned char>& rgb, int w, int h, int x, int y,
         const unsigned char* col) {
  if (x < 0 || y < 0 || x >= w || y >= h) return;
  size_t p = (static_cast<size_t>(y) * w + x) * 3;
  rgb[p] = col[0];
  rgb[p + 1] = col[1];
  rgb[p + 2] = col[2];
}

void line(std::vector<unsigned char>& rgb, int w, int h, int x0, int y0, int x1,
          int y1, const unsigned char* col) {
  int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1, err = dx + dy;
  while (true) {
    put(rgb, w, h, x0, y0, col);
    if (x0 == x1 && y0 == y1) break;
    int e2 = 2 * err;
    if (e2 >= dy) err += dy, x0 += sx;
    if (e2 <= dx) err += dx, y0 += sy;
  }
}

}  // namespace

void write_curve_plot(const std::string& path, const std::vector<Curve>& curves,
                      int width, int height) {
  std::vector<unsigned char> rgb(static_cast<size_t>(3) * width * height, 250);
  const int m = 24;  // margin
  double xlo = 0, xhi = 1, ylo = 0, yhi = 1;
  bool first = true;
  for (const auto& c : curves)
    for (size_t i = 0; i < c.xs.size(); ++i) {
      if (first) {
        xlo = xhi = c.xs[i];
        ylo = yhi = c.ys[i];
        first = false;
      }
      xlo = std::min(xlo, c.xs[i]);
      xhi = std::max(xhi, c.xs[i]);
      ylo = std::min(ylo, c.ys[i]);
      yhi = std::max(yhi, c.ys[i]);
    }
  if (xhi <= xlo) xhi = xlo + 1;
  if (yhi <= ylo) yhi = ylo + 1;
  auto px = [&](double x) {
    return m + static_cast<int>((x - xlo) / (xhi - xlo) * (width - 2 * m));
  };
  auto py = [&](double y) {
    return height - m - static_cast<int>((y - ylo) / (yhi - ylo) * (height - 2 * m));
  };
  const unsigned char axis[3] = {90, 90, 90};
  line(rgb, width, height, m, height - m, width - m, height - m, axis);
  line(rgb, width, height, m, m, m, height - m, axis);
  for (size_t ci = 0; ci < curves.size(); ++ci) {
    const auto& c = curves[ci];
    const unsigned char* col = kPalette[ci % 6];
    for (size_t i = 0; i + 1 < c.xs.size(); ++i)
      line(rgb, width, height, px(c.xs[i]), py(c.ys[i]), px(c.xs[i + 1]),
           py(c.ys[i + 1]), col);
    // legend tick
    int ly = m / 2 + static_cast<int>(ci) * 4;
    line(rgb, width, height, width - m - 20, ly, width - m, ly, col);
  }
  write_p6(path, rgb, width, height);
}

}  // namespace ganmem
