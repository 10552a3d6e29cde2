// Copyright (c) the flowmatch authors
// SPDX-License-Identifier: Apache-2.0
#include "flowmatch/raster.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace flowmatch {

RgbImage RgbImage::from_gray(const GrayImage& g) {
  RgbImage img;
  img.width = g.width;
  img.height = g.height;
  img.pixels.resize(static_cast<std::size_t>(g.width) * g.height * 3);
  for (std::size_t i = 0; i < g.pixels.size(); ++i) {
    img.pixels[3 * i] = g.pixels[i];
    img.pixels[3 * i + 1] = g.pixels[i];
    img.pixels[3 * i + 2] = g.pixels[i];
  }
  return img;
}

void RgbImage::set(int row, int col, std::uint8_t r, std::uint8_t g,
                   std::uint8_t b) {
  if (row < 0 || row >= height || col < 0 || col >= width) return;
  const std::size_t i = 3 * (static_cast<std::size_t>(row) * width + col);
  pixels[i] = r;
  pixels[i + 1] = g;
  pixels[i + 2] = b;
}

void write_pgm(const std::string& path, const GrayImage& img) {
  std::ofstream os(path, std::ios::binary);
  FM_CHECK(os.good(), ConfigError, "cannot open raster file for writing: ", path);
  os << "P5\n" << img.width << " " << img.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.pixels.data()),
           static_cast<std::streamsize>(img.pixels.size()));
  FM_CHECK(os.good(), ConfigError, "failed writing raster: ", path);
}

void write_ppm(const std::string& path, const RgbImage& img) {
  std::ofstream os(path, std::ios::binary);
  FM_CHECK(os.good(), ConfigError, "cannot open raster file for writing: ", path);
  os << "P6\n" << img.width << " " << img.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.pixels.data()),
           static_cast<std::streamsize>(img.pixels.size()));
  FM_CHECK(os.good(), ConfigError, "failed writing raster: ", path);
}

GrayImage rasterize(const std::function<double(double, double)>& field, int width,
                    int height, double xlo, double xhi, double ylo, double yhi) {
  FM_CHECK(width >= 2 && height >= 2, ConfigError, "raster needs >= 2x2 pixels");
  std::vector<double> vals(static_cast<std::size_t>(width) * height);
  double vmax = 0.0, vmin = 0.0;
  bool first = true;
  for (int r = 0; r < height; ++r) {
    // row 0 at the top = yhi
    const double y = yhi + (ylo - yhi) * (r + 0.5) / height;
    for (int c = 0; c < width; ++c) {
      const double x = xlo + (xhi - xlo) * (c + 0.5) / width;
      const double v = field(x, y);
      vals[static_cast<std::size_t>(r) * width + c] = v;
      if (first || v > vmax) vmax = first ? v : std::max(vmax, v);
      if (first || v < vmin) vmin = first ? v : std::min(vmin, v);
      first = false;
    }
  }
  GrayImage img;
  img.width = width;
  img.height = height;
  img.pixels.resize(vals.size());
  const double range = vmax - vmin;
  for (std::size_t i = 0; i < vals.size(); ++i) {
    const double s = range > 0 ? (vals[i] - vmin) / range : 0.0;
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * s));
  }
  return img;
}

void draw_polyline(RgbImage& img, const std::vector<std::pair<double, double>>& pts,
                   double xlo, double xhi, double ylo, double yhi, std::uint8_t r,
                   std::uint8_t g, std::uint8_t b) {
  auto to_pixel = [&](double x, double y) {
    const int col = static_cast<int>(std::lround((x - xlo) / (xhi - xlo) * (img.width - 1)));
    const int row = static_cast<int>(std::lround((yhi - y) / (yhi - ylo) * (img.height - 1)));
    return std::pair<int, int>(row, col);
  };
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    auto [r0, c0] = to_pixel(pts[i].first, pts[i].second);
    auto [r1, c1] = to_pixel(pts[i + 1].first, pts[i + 1].second);
    const int steps = std::max(std::abs(r1 - r0), std::abs(c1 - c0)) + 1;
    for (int s = 0; s <= steps; ++s) {
      const double a = static_cast<double>(s) / steps;
      img.set(static_cast<int>(std::lround(r0 + a * (r1 - r0))),
              static_cast<int>(std::lround(c0 + a * (c1 - c0))), r, g, b);
    }
  }
}

}  // namespace flowmatch
