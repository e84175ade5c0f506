#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "usf/image.hpp"

namespace usf::synth {

struct LesionGeometry {
  int cx = 0, cy = 0;  // ellipse center
  int rx = 0, ry = 0;  // ellipse radii
  int septa = 0;       // bright dividing lines, 2-4
};

struct CaliperCross {
  int r = 0, c = 0;
};

struct TextBlock {
  int r = 0, c = 0;
  int chars = 8;
};

// Full deterministic description of one phantom; everything gen_case draws
// is derived from these fields plus sub-streams of `seed`.
struct PhantomSpec {
  int label = 0;  // 0 = normal, 1 = cystic hygroma
  int canvas = 256;
  LesionGeometry lesion;  // meaningful only when label == 1
  // neck band, drawn for normal cases: row(c) = cy + amp*sin(2*pi*cycles*c/W + phase)
  double band_cy = 128.0;
  double band_amp = 16.0;
  double band_cycles = 0.8;
  double band_phase = 0.0;
  int band_width = 3;  // 2-4 px
  std::vector<CaliperCross> calipers;
  std::vector<TextBlock> text_blocks;
  uint64_t seed = 0;
};

struct CaseResult {
  img::RgbImage image;      // grayscale content replicated to R=G=B, overlays on top
  img::GrayImage gray;      // [0,1] content before overlays
  img::BinaryMask overlay;  // exactly the pixels the overlays painted
  int label = 0;
};

// Randomizes geometry and annotation placement from the seed.
PhantomSpec make_spec(int label, uint64_t seed);

// Low-frequency background (values in 0.3-0.7) times unit-mean Rayleigh
// speckle (sigma 0.35), clipped to [0,1].
img::GrayImage gen_speckle(int h, int w, uint64_t seed);

CaseResult gen_case(const PhantomSpec& spec);

const char* label_name(int label);
int parse_label(const std::string& name);

}  // namespace usf::synth
