#include "usf/image.hpp"

#include <algorithm>
#include <cmath>

#include "usf/preprocess.hpp"

namespace usf::img {

namespace {

void check_dims(int h, int w) {
  if (h <= 0 || w <= 0)
    throw ValidationError("image dimensions must be positive, got " + std::to_string(h) + "x" +
                          std::to_string(w));
}

}  // namespace

RgbImage::RgbImage(int height, int width) : h(height), w(width) {
  check_dims(h, w);
  px.assign(static_cast<size_t>(h) * w * 3, 0);
}

HsvImage::HsvImage(int height, int width) : h(height), w(width) {
  check_dims(h, w);
  px.assign(static_cast<size_t>(h) * w * 3, 0);
}

BinaryMask::BinaryMask(int height, int width) : h(height), w(width) {
  check_dims(h, w);
  bits.assign(static_cast<size_t>(h) * w, 0);
}

int64_t BinaryMask::count() const {
  int64_t n = 0;
  for (uint8_t b : bits) n += b ? 1 : 0;
  return n;
}

GrayImage::GrayImage(int height, int width) : h(height), w(width) {
  check_dims(h, w);
  px.assign(static_cast<size_t>(h) * w, 0.0);
}

RgbImage crop_borders(const RgbImage& img, const Margins& m) {
  if (m.top < 0 || m.bottom < 0 || m.left < 0 || m.right < 0)
    throw ValidationError("crop_borders: margins must be non-negative");
  const int nh = img.h - m.top - m.bottom;
  const int nw = img.w - m.left - m.right;
  if (nh < 32 || nw < 32)
    throw ValidationError("crop_borders: margins leave a " + std::to_string(nh) + "x" +
                          std::to_string(nw) + " interior; at least 32x32 required");
  RgbImage out(nh, nw);
  for (int r = 0; r < nh; ++r)
    std::copy_n(img.px.data() + (static_cast<size_t>(r + m.top) * img.w + m.left) * 3,
                static_cast<size_t>(nw) * 3, out.px.data() + static_cast<size_t>(r) * nw * 3);
  return out;
}

HsvImage rgb_to_hsv(const RgbImage& img) {
  HsvImage out(img.h, img.w);
  const int64_t n = static_cast<int64_t>(img.h) * img.w;
  for (int64_t i = 0; i < n; ++i) {
    const double r = img.px[static_cast<size_t>(i * 3 + 0)];
    const double g = img.px[static_cast<size_t>(i * 3 + 1)];
    const double b = img.px[static_cast<size_t>(i * 3 + 2)];
    const double v = std::max({r, g, b});
    const double lo = std::min({r, g, b});
    const double delta = v - lo;
    double hue = 0.0;  // degrees in [0, 360)
    if (delta > 0.0) {
      if (v == r)
        hue = 60.0 * (g - b) / delta;
      else if (v == g)
        hue = 60.0 * (b - r) / delta + 120.0;
      else
        hue = 60.0 * (r - g) / delta + 240.0;
      if (hue < 0.0) hue += 360.0;
    }
    int hh = static_cast<int>(std::lround(hue / 2.0)) % 180;
    const int s = v == 0.0 ? 0 : static_cast<int>(std::lround(255.0 * delta / v));
    out.px[static_cast<size_t>(i * 3 + 0)] = static_cast<uint8_t>(hh);
    out.px[static_cast<size_t>(i * 3 + 1)] = static_cast<uint8_t>(s);
    out.px[static_cast<size_t>(i * 3 + 2)] = static_cast<uint8_t>(v);
  }
  return out;
}

BinaryMask annotation_mask(const HsvImage& img, const HsvThresholds& th) {
  BinaryMask out(img.h, img.w);
  const int64_t n = static_cast<int64_t>(img.h) * img.w;
  for (int64_t i = 0; i < n; ++i) {
    const bool gray = img.px[static_cast<size_t>(i * 3 + 0)] <= th.hue_max &&
                      img.px[static_cast<size_t>(i * 3 + 1)] <= th.sat_max &&
                      img.px[static_cast<size_t>(i * 3 + 2)] <= th.val_max;
    out.bits[static_cast<size_t>(i)] = gray ? 0 : 1;
  }
  return out;
}

BinaryMask dilate5(const BinaryMask& mask) {
  // Separable 5x5 box dilation: horizontal pass then vertical pass.
  BinaryMask tmp(mask.h, mask.w);
  for (int r = 0; r < mask.h; ++r)
    for (int c = 0; c < mask.w; ++c) {
      uint8_t hit = 0;
      for (int dc = -2; dc <= 2 && !hit; ++dc) {
        const int cc = c + dc;
        if (cc >= 0 && cc < mask.w) hit = mask.at(r, cc);
      }
      tmp.at(r, c) = hit;
    }
  BinaryMask out(mask.h, mask.w);
  for (int r = 0; r < mask.h; ++r)
    for (int c = 0; c < mask.w; ++c) {
      uint8_t hit = 0;
      for (int dr = -2; dr <= 2 && !hit; ++dr) {
        const int rr = r + dr;
        if (rr >= 0 && rr < mask.h) hit = tmp.at(rr, c);
      }
      out.at(r, c) = hit;
    }
  return out;
}

GrayImage to_gray(const RgbImage& img) {
  GrayImage out(img.h, img.w);
  const int64_t n = static_cast<int64_t>(img.h) * img.w;
  for (int64_t i = 0; i < n; ++i)
    out.px[static_cast<size_t>(i)] = 0.299 * img.px[static_cast<size_t>(i * 3 + 0)] +
                                     0.587 * img.px[static_cast<size_t>(i * 3 + 1)] +
                                     0.114 * img.px[static_cast<size_t>(i * 3 + 2)];
  return out;
}

GrayImage standardize(const GrayImage& img) {
  const int64_t n = static_cast<int64_t>(img.h) * img.w;
  double mean = 0.0;
  for (double v : img.px) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : img.px) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  const double denom = std::max(std::sqrt(var), 1e-8);
  GrayImage out(img.h, img.w);
  for (int64_t i = 0; i < n; ++i)
    out.px[static_cast<size_t>(i)] = (img.px[static_cast<size_t>(i)] - mean) / denom;
  return out;
}

GrayImage resize_bilinear(const GrayImage& img, int out_h, int out_w) {
  if (img.h < 2 || img.w < 2)
    throw ValidationError("resize_bilinear: source must be at least 2x2, got " +
                          std::to_string(img.h) + "x" + std::to_string(img.w));
  check_dims(out_h, out_w);
  GrayImage out(out_h, out_w);
  const double sr = static_cast<double>(img.h) / out_h;
  const double sc = static_cast<double>(img.w) / out_w;
  for (int r = 0; r < out_h; ++r) {
    double fr = (r + 0.5) * sr - 0.5;
    fr = std::clamp(fr, 0.0, static_cast<double>(img.h - 1));
    const int r0 = static_cast<int>(fr);
    const int r1 = std::min(r0 + 1, img.h - 1);
    const double tr = fr - r0;
    for (int c = 0; c < out_w; ++c) {
      double fc = (c + 0.5) * sc - 0.5;
      fc = std::clamp(fc, 0.0, static_cast<double>(img.w - 1));
      const int c0 = static_cast<int>(fc);
      const int c1 = std::min(c0 + 1, img.w - 1);
      const double tc = fc - c0;
      out.at(r, c) = (1 - tr) * ((1 - tc) * img.at(r0, c0) + tc * img.at(r0, c1)) +
                     tr * ((1 - tc) * img.at(r1, c0) + tc * img.at(r1, c1));
    }
  }
  return out;
}

PreprocResult preprocess_pipeline(const RgbImage& img, const PreprocConfig& cfg) {
  const RgbImage cropped = crop_borders(img, cfg.margins);
  const HsvImage hsv = rgb_to_hsv(cropped);
  const BinaryMask raw_mask = annotation_mask(hsv, cfg.thresholds);
  PreprocResult res;
  res.annotations = dilate5(raw_mask);
  const bool have_annotations = res.annotations.count() > 0;

  GrayImage gray;
  if (have_annotations && cfg.inpaint_rgb) {
    // Paper-literal order: fill each color channel, then mix to luma.
    GrayImage ch[3];
    for (int i = 0; i < 3; ++i) {
      ch[i] = GrayImage(cropped.h, cropped.w);
      for (int r = 0; r < cropped.h; ++r)
        for (int c = 0; c < cropped.w; ++c) ch[i].at(r, c) = cropped.at(r, c, i);
      InpaintResult filled = inpaint_ns(ch[i], res.annotations, cfg.inpaint);
      res.inpaint_converged = res.inpaint_converged && filled.converged;
      ch[i] = std::move(filled.image);
    }
    gray = GrayImage(cropped.h, cropped.w);
    for (int64_t i = 0; i < static_cast<int64_t>(gray.px.size()); ++i)
      gray.px[static_cast<size_t>(i)] = 0.299 * ch[0].px[static_cast<size_t>(i)] +
                                        0.587 * ch[1].px[static_cast<size_t>(i)] +
                                        0.114 * ch[2].px[static_cast<size_t>(i)];
  } else {
    gray = to_gray(cropped);
    if (have_annotations) {
      InpaintResult filled = inpaint_ns(gray, res.annotations, cfg.inpaint);
      res.inpaint_converged = filled.converged;
      gray = std::move(filled.image);
    }
  }
  res.image = resize_bilinear(standardize(gray), cfg.target_h, cfg.target_w);
  return res;
}

}  // namespace usf::img
