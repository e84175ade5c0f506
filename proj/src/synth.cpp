#include "usf/synth.hpp"

#include <algorithm>
#include <cmath>

#include "usf/rng.hpp"

namespace usf::synth {

namespace {

constexpr double kSpeckleSigma = 0.35;
constexpr double kBandValue = 0.22;    // dark neck band, pre-speckle
constexpr double kLesionValue = 0.06;  // cystic interior, pre-speckle
constexpr double kSeptumValue = 0.85;  // bright dividing lines, pre-speckle
constexpr int kCoarseCells = 8;        // background grid resolution

// Coarse random field, bilinearly upsampled. Cell values share a per-image
// brightness midpoint so corpus-level class separation by global mean stays
// weak (the lesion deficit hides inside the between-image brightness spread).
img::GrayImage background_map(int h, int w, Rng& rng) {
  const double mid = rng.uniform(0.42, 0.58);
  std::vector<double> coarse(static_cast<size_t>((kCoarseCells + 1) * (kCoarseCells + 1)));
  for (double& v : coarse) v = rng.uniform(mid - 0.12, mid + 0.12);
  img::GrayImage out(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const double fy = static_cast<double>(r) / h * kCoarseCells;
      const double fx = static_cast<double>(c) / w * kCoarseCells;
      const int y0 = static_cast<int>(fy), x0 = static_cast<int>(fx);
      const double ty = fy - y0, tx = fx - x0;
      auto cell = [&](int y, int x) {
        return coarse[static_cast<size_t>(y * (kCoarseCells + 1) + x)];
      };
      out.at(r, c) = (1 - ty) * ((1 - tx) * cell(y0, x0) + tx * cell(y0, x0 + 1)) +
                     ty * ((1 - tx) * cell(y0 + 1, x0) + tx * cell(y0 + 1, x0 + 1));
    }
  return out;
}

void apply_speckle(img::GrayImage& img, Rng& rng) {
  const double unit = kSpeckleSigma * std::sqrt(M_PI / 2.0);  // Rayleigh mean
  for (double& v : img.px) v = std::clamp(v * rng.rayleigh(kSpeckleSigma) / unit, 0.0, 1.0);
}

double band_row(const PhantomSpec& s, int c) {
  return s.band_cy +
         s.band_amp * std::sin(2.0 * M_PI * s.band_cycles * c / s.canvas + s.band_phase);
}

void paint_band(img::GrayImage& bg, const PhantomSpec& s) {
  for (int c = 0; c < s.canvas; ++c) {
    const int r0 = static_cast<int>(std::lround(band_row(s, c) - (s.band_width - 1) / 2.0));
    for (int k = 0; k < s.band_width; ++k) {
      const int r = r0 + k;
      if (r >= 0 && r < s.canvas) bg.at(r, c) = kBandValue;
    }
  }
}

void paint_lesion(img::GrayImage& bg, const PhantomSpec& s, Rng& rng) {
  const LesionGeometry& g = s.lesion;
  for (int r = g.cy - g.ry; r <= g.cy + g.ry; ++r)
    for (int c = g.cx - g.rx; c <= g.cx + g.rx; ++c) {
      if (r < 0 || r >= s.canvas || c < 0 || c >= s.canvas) continue;
      const double ey = static_cast<double>(r - g.cy) / g.ry;
      const double ex = static_cast<double>(c - g.cx) / g.rx;
      if (ex * ex + ey * ey <= 1.0) bg.at(r, c) = kLesionValue;
    }
  // septa: bright chords across the ellipse, drawn in unit-circle coordinates
  for (int i = 0; i < g.septa; ++i) {
    const double theta = rng.uniform(0.0, M_PI);
    const double off = rng.uniform(-0.45, 0.45);
    const double dx = std::cos(theta), dy = std::sin(theta);
    for (double t = -1.3; t <= 1.3; t += 0.002) {
      const double ux = -dy * off + dx * t;
      const double uy = dx * off + dy * t;
      if (ux * ux + uy * uy > 0.94) continue;  // keep inside the rim
      const int c = static_cast<int>(std::lround(g.cx + ux * g.rx));
      const int r = static_cast<int>(std::lround(g.cy + uy * g.ry));
      for (int rr = r; rr <= r + 1; ++rr)
        for (int cc = c; cc <= c + 1; ++cc)
          if (rr >= 0 && rr < s.canvas && cc >= 0 && cc < s.canvas)
            bg.at(rr, cc) = kSeptumValue;
    }
  }
}

void put_overlay(CaseResult& out, int r, int c, uint8_t R, uint8_t G, uint8_t B) {
  if (r < 0 || r >= out.image.h || c < 0 || c >= out.image.w) return;
  out.image.at(r, c, 0) = R;
  out.image.at(r, c, 1) = G;
  out.image.at(r, c, 2) = B;
  out.overlay.at(r, c) = 1;
}

void paint_cross(CaseResult& out, const CaliperCross& k) {
  for (int d = -3; d <= 3; ++d) {
    put_overlay(out, k.r + d, k.c, 255, 255, 0);  // yellow caliper
    put_overlay(out, k.r, k.c + d, 255, 255, 0);
  }
}

void paint_text(CaseResult& out, const TextBlock& b, Rng& rng) {
  for (int ch = 0; ch < b.chars; ++ch)
    for (int r = 0; r < 5; ++r)
      for (int c = 0; c < 3; ++c)
        if (rng.bernoulli(0.6))
          put_overlay(out, b.r + r, b.c + ch * 4 + c, 0, 255, 255);  // cyan glyphs
}

}  // namespace

const char* label_name(int label) { return label == 0 ? "normal" : "cystic_hygroma"; }

int parse_label(const std::string& name) {
  if (name == "normal") return 0;
  if (name == "cystic_hygroma") return 1;
  throw ValidationError("unknown class label '" + name + "'");
}

PhantomSpec make_spec(int label, uint64_t seed) {
  if (label != 0 && label != 1)
    throw ValidationError("class label must be 0 (normal) or 1 (cystic hygroma)");
  Rng rng(derive_seed(seed, "spec"));
  PhantomSpec s;
  s.label = label;
  s.seed = seed;
  s.band_cy = 80 + static_cast<double>(rng.below(97));
  s.band_amp = rng.uniform(8.0, 24.0);
  s.band_cycles = rng.uniform(0.5, 1.0);
  s.band_phase = rng.uniform(0.0, 2.0 * M_PI);
  s.band_width = 2 + static_cast<int>(rng.below(3));
  if (label == 1) {
    // Large multiloculated collection: area comfortably above four times the
    // widest possible band (band <= 4 px * ~300 px arc; pi*50*34 > 5300).
    s.lesion.rx = 50 + static_cast<int>(rng.below(13));
    s.lesion.ry = 34 + static_cast<int>(rng.below(11));
    s.lesion.cx = 78 + static_cast<int>(rng.below(101));
    s.lesion.cy = 80 + static_cast<int>(rng.below(97));
    s.lesion.septa = 2 + static_cast<int>(rng.below(3));
    s.calipers.push_back({s.lesion.cy, s.lesion.cx - s.lesion.rx});
    s.calipers.push_back({s.lesion.cy, s.lesion.cx + s.lesion.rx});
  } else {
    s.calipers.push_back({static_cast<int>(std::lround(band_row(s, 64))), 64});
    s.calipers.push_back({static_cast<int>(std::lround(band_row(s, 192))), 192});
  }
  s.text_blocks.push_back({6 + static_cast<int>(rng.below(6)),
                           6 + static_cast<int>(rng.below(10)), 8});
  s.text_blocks.push_back({234 + static_cast<int>(rng.below(6)),
                           150 + static_cast<int>(rng.below(40)), 8});
  return s;
}

img::GrayImage gen_speckle(int h, int w, uint64_t seed) {
  if (h < 64 || w < 64) throw ValidationError("speckle images must be at least 64x64");
  Rng rng(seed);
  img::GrayImage out = background_map(h, w, rng);
  apply_speckle(out, rng);
  return out;
}

CaseResult gen_case(const PhantomSpec& spec) {
  if (spec.canvas != 256) throw ValidationError("phantom canvas is fixed at 256x256");
  if (spec.label == 1 &&
      (spec.lesion.rx <= 0 || spec.lesion.ry <= 0 || spec.lesion.septa < 2 ||
       spec.lesion.septa > 4))
    throw ValidationError("cystic hygroma specs need positive radii and 2-4 septa");
  const int n = spec.canvas;
  Rng bg_rng(derive_seed(spec.seed, "background"));
  img::GrayImage bg = background_map(n, n, bg_rng);
  if (spec.label == 1) {
    Rng septa_rng(derive_seed(spec.seed, "septa"));
    paint_lesion(bg, spec, septa_rng);
  } else {
    paint_band(bg, spec);
  }
  Rng speckle_rng(derive_seed(spec.seed, "speckle"));
  apply_speckle(bg, speckle_rng);

  CaseResult out{img::RgbImage(n, n), std::move(bg), img::BinaryMask(n, n), spec.label};
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      const auto v = static_cast<uint8_t>(std::lround(out.gray.at(r, c) * 255.0));
      out.image.at(r, c, 0) = out.image.at(r, c, 1) = out.image.at(r, c, 2) = v;
    }
  for (const CaliperCross& k : spec.calipers) paint_cross(out, k);
  Rng text_rng(derive_seed(spec.seed, "text"));
  for (const TextBlock& b : spec.text_blocks) paint_text(out, b, text_rng);
  return out;
}

}  // namespace usf::synth
