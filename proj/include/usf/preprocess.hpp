#pragma once

#include "usf/image.hpp"
#include "usf/inpaint.hpp"

namespace usf::img {

struct PreprocConfig {
  Margins margins;             // border crop, default 0
  HsvThresholds thresholds;    // grayscale-keep ranges
  InpaintParams inpaint;       // hole-filling solver settings
  int target_h = 224;
  int target_w = 224;
  bool inpaint_rgb = false;    // fill each RGB channel before the luma mix
};

struct PreprocResult {
  GrayImage image;             // standardized, resized
  BinaryMask annotations;      // dilated mask that was filled (cropped frame)
  bool inpaint_converged = true;
};

// Full chain: crop -> HSV -> threshold mask -> 5x5 dilation -> grayscale ->
// inpaint (skipped when the mask is empty) -> standardize -> resize.
PreprocResult preprocess_pipeline(const RgbImage& img, const PreprocConfig& cfg);

}  // namespace usf::img
