#pragma once

#include <cstdint>
#include <vector>

#include "usf/common.hpp"

namespace usf::img {

// 8-bit interleaved RGB, row-major.
struct RgbImage {
  int h = 0, w = 0;
  std::vector<uint8_t> px;  // 3 per pixel

  RgbImage() = default;
  RgbImage(int height, int width);
  uint8_t& at(int r, int c, int ch) { return px[(static_cast<size_t>(r) * w + c) * 3 + ch]; }
  uint8_t at(int r, int c, int ch) const { return px[(static_cast<size_t>(r) * w + c) * 3 + ch]; }
};

// 8-bit HSV with hue on [0,179] (degrees halved).
struct HsvImage {
  int h = 0, w = 0;
  std::vector<uint8_t> px;

  HsvImage() = default;
  HsvImage(int height, int width);
  uint8_t& at(int r, int c, int ch) { return px[(static_cast<size_t>(r) * w + c) * 3 + ch]; }
  uint8_t at(int r, int c, int ch) const { return px[(static_cast<size_t>(r) * w + c) * 3 + ch]; }
};

// One byte per pixel, 0 or 1 (1 = annotation).
struct BinaryMask {
  int h = 0, w = 0;
  std::vector<uint8_t> bits;

  BinaryMask() = default;
  BinaryMask(int height, int width);
  uint8_t& at(int r, int c) { return bits[static_cast<size_t>(r) * w + c]; }
  uint8_t at(int r, int c) const { return bits[static_cast<size_t>(r) * w + c]; }
  int64_t count() const;
};

// Single-channel 64-bit float image.
struct GrayImage {
  int h = 0, w = 0;
  std::vector<double> px;

  GrayImage() = default;
  GrayImage(int height, int width);
  double& at(int r, int c) { return px[static_cast<size_t>(r) * w + c]; }
  double at(int r, int c) const { return px[static_cast<size_t>(r) * w + c]; }
};

// Grayscale-keep upper bounds; a pixel at or below all three stays unmasked.
struct HsvThresholds {
  int hue_max = 27;
  int sat_max = 150;
  int val_max = 255;
};

struct Margins {
  int top = 0, bottom = 0, left = 0, right = 0;
};

RgbImage crop_borders(const RgbImage& img, const Margins& m);
HsvImage rgb_to_hsv(const RgbImage& img);
BinaryMask annotation_mask(const HsvImage& img, const HsvThresholds& th);

// 5x5 square structuring element, clipped at the borders.
BinaryMask dilate5(const BinaryMask& mask);

// Luma weights 0.299/0.587/0.114.
GrayImage to_gray(const RgbImage& img);

// (I - mean) / max(std, 1e-8), population statistics over all pixels.
GrayImage standardize(const GrayImage& img);

// Half-pixel-centered bilinear resampling.
GrayImage resize_bilinear(const GrayImage& img, int out_h, int out_w);

}  // namespace usf::img
