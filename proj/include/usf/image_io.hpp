#pragma once

#include <string>

#include "usf/image.hpp"

namespace usf::img {

// Reads a PNG or binary PPM/PGM (8-bit) file; grayscale sources are
// replicated across the three channels.
RgbImage read_image(const std::string& path);

// Deterministic PNG encoding (fixed filter and compression settings).
void write_png(const std::string& path, const RgbImage& img);

// 8-bit preview: values requantized by linear min-max.
void write_pgm(const std::string& path, const GrayImage& img);

// Lossless float container: magic "GRAYF64", u32 height, u32 width,
// little-endian f64 payload.
void write_grayf64(const std::string& path, const GrayImage& img);
GrayImage read_grayf64(const std::string& path);

}  // namespace usf::img
