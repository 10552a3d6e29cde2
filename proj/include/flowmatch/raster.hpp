// Copyright (c) the flowmatch authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "flowmatch/common.hpp"

namespace flowmatch {

// Minimal binary PGM (P5) / PPM (P6) writers for density heatmaps and
// trajectory overlays; bit-exact, no image libraries.

struct GrayImage {
  int width = 0, height = 0;
  std::vector<std::uint8_t> pixels;  // row-major, row 0 at top

  std::uint8_t& at(int row, int col) { return pixels[row * width + col]; }
};

struct RgbImage {
  int width = 0, height = 0;
  std::vector<std::uint8_t> pixels;  // rgb triples

  static RgbImage from_gray(const GrayImage& g);
  void set(int row, int col, std::uint8_t r, std::uint8_t g, std::uint8_t b);
};

void write_pgm(const std::string& path, const GrayImage& img);
void write_ppm(const std::string& path, const RgbImage& img);

// Rasterize a scalar field over [xlo,xhi]x[ylo,yhi]; values are linearly
// mapped to 0..255 with the maximum pinned at 255 (max-normalized density).
// Row 0 corresponds to yhi (image convention).
GrayImage rasterize(const std::function<double(double, double)>& field, int width,
                    int height, double xlo, double xhi, double ylo, double yhi);

// Draw a polyline (data coordinates) onto the image.
void draw_polyline(RgbImage& img, const std::vector<std::pair<double, double>>& pts,
                   double xlo, double xhi, double ylo, double yhi, std::uint8_t r,
                   std::uint8_t g, std::uint8_t b);

}  // namespace flowmatch
