#include "usf/scorecam.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

#include "usf/common.hpp"
#include "usf/image_io.hpp"
#include "usf/parallel.hpp"
#include "usf/tape.hpp"

namespace usf::xai {

using nd::Tensor;

namespace {

void check_input(const model::ModelConfig& cfg, const Tensor& chw) {
  if (chw.rank() != 3 || chw.dim(0) != cfg.in_channels || chw.dim(1) != cfg.image_size ||
      chw.dim(2) != cfg.image_size) {
    throw ValidationError("activation input " + nd::shape_str(chw.shape) +
                          " does not match the model input [" +
                          std::to_string(cfg.in_channels) + ", " +
                          std::to_string(cfg.image_size) + ", " +
                          std::to_string(cfg.image_size) + "]");
  }
}

// Target-class softmax probability from one full forward pass.
double class_prob(const model::ModelCheckpoint& ckpt, const Tensor& chw, int target_class,
                  std::atomic<int>& passes) {
  ad::Tape tape;
  model::Forward fwd(tape, ckpt.config, ckpt.params);
  const model::Forward::ClsOut out = fwd.classify(chw);
  passes.fetch_add(1, std::memory_order_relaxed);
  return tape.value(out.probs).v[static_cast<size_t>(target_class)];
}

}  // namespace

Tensor extract_activations(const model::ModelCheckpoint& ckpt, const Tensor& chw,
                           int layer_index) {
  const model::ModelConfig& cfg = ckpt.config;
  check_input(cfg, chw);
  if (layer_index < 0 || layer_index >= cfg.enc_depth) {
    throw ValidationError("layer index " + std::to_string(layer_index) +
                          " outside the encoder depth " + std::to_string(cfg.enc_depth));
  }

  ad::Tape tape;
  model::Forward fwd(tape, cfg, ckpt.params);
  std::vector<int> blocks;
  fwd.trace_blocks(&blocks);

  const Tensor patches = model::patchify(chw, cfg.patch_size);
  std::vector<int> positions(static_cast<size_t>(cfg.n_patches()));
  std::iota(positions.begin(), positions.end(), 0);
  (void)fwd.encode(patches, positions);
  if (static_cast<int>(blocks.size()) != cfg.enc_depth)
    throw RuntimeFailure("encoder trace did not cover every block");

  const Tensor tokens = tape.value(blocks[static_cast<size_t>(layer_index)]);
  const int grid = cfg.patches_per_side();
  const int dim = cfg.enc_dim;
  const int skip = cfg.use_cls_token ? 1 : 0;  // drop the non-spatial token

  Tensor stack = Tensor::zeros({dim, grid, grid});
  for (int k = 0; k < dim; ++k) {
    for (int p = 0; p < cfg.n_patches(); ++p) {
      stack.v[(static_cast<size_t>(k) * grid + p / grid) * grid + p % grid] =
          tokens.v[static_cast<size_t>(p + skip) * dim + k];
    }
  }
  return stack;
}

std::vector<img::GrayImage> upsample_channels(const Tensor& activations, int out_size) {
  if (activations.rank() != 3 || activations.dim(1) != activations.dim(2))
    throw ValidationError("activation stack must be [channels, grid, grid]");
  if (out_size < 1) throw ValidationError("upsample target must be positive");
  const int k_count = activations.dim(0);
  const int grid = activations.dim(1);
  std::vector<img::GrayImage> out(static_cast<size_t>(k_count));
  for (int k = 0; k < k_count; ++k) {
    img::GrayImage plane(grid, grid);
    std::copy_n(&activations.v[static_cast<size_t>(k) * grid * grid], grid * grid,
                plane.px.begin());
    out[static_cast<size_t>(k)] = img::resize_bilinear(plane, out_size, out_size);
  }
  return out;
}

img::GrayImage normalize01(const img::GrayImage& plane) {
  if (plane.px.empty()) throw ValidationError("cannot normalize an empty plane");
  const auto [lo_it, hi_it] = std::minmax_element(plane.px.begin(), plane.px.end());
  img::GrayImage out(plane.h, plane.w);
  const double lo = *lo_it, hi = *hi_it;
  if (hi > lo) {
    for (size_t i = 0; i < plane.px.size(); ++i) out.px[i] = (plane.px[i] - lo) / (hi - lo);
  }
  return out;  // flat plane -> all zeros
}

std::vector<double> softmax_weights(const std::vector<double>& scores, double baseline) {
  if (scores.empty()) throw ValidationError("softmax over an empty score list");
  std::vector<double> w(scores.size());
  double hi = -std::numeric_limits<double>::infinity();
  for (double s : scores) {
    if (!std::isfinite(s)) throw ValidationError("non-finite channel score");
    hi = std::max(hi, s - baseline);
  }
  double sum = 0.0;
  for (size_t i = 0; i < scores.size(); ++i) {
    w[i] = std::exp(scores[i] - baseline - hi);
    sum += w[i];
  }
  for (double& v : w) v /= sum;
  return w;
}

CamResult compose_cam(const std::vector<img::GrayImage>& channels,
                      const std::vector<double>& alpha) {
  if (channels.empty() || channels.size() != alpha.size())
    throw ValidationError("one weight per activation channel is required");
  const int h = channels.front().h, w = channels.front().w;
  CamResult r;
  r.alpha = alpha;
  r.map = Tensor::zeros({h, w});
  for (size_t k = 0; k < channels.size(); ++k) {
    if (channels[k].h != h || channels[k].w != w)
      throw ValidationError("activation channels disagree on the plane size");
    for (size_t i = 0; i < r.map.v.size(); ++i) r.map.v[i] += alpha[k] * channels[k].px[i];
  }
  for (double& v : r.map.v) v = std::max(0.0, v);
  const auto [lo_it, hi_it] = std::minmax_element(r.map.v.begin(), r.map.v.end());
  r.raw_lo = *lo_it;
  r.raw_hi = *hi_it;
  if (r.raw_hi > r.raw_lo) {
    for (double& v : r.map.v) v = (v - r.raw_lo) / (r.raw_hi - r.raw_lo);
  } else {
    std::fill(r.map.v.begin(), r.map.v.end(), 0.0);
  }
  return r;
}

CamResult score_cam(const model::ModelCheckpoint& ckpt, const Tensor& chw, int target_class,
                    int layer_index, int threads) {
  const model::ModelConfig& cfg = ckpt.config;
  check_input(cfg, chw);
  if (target_class < 0 || target_class >= cfg.class_count)
    throw ValidationError("target class " + std::to_string(target_class) +
                          " outside the configured " + std::to_string(cfg.class_count) +
                          " classes");

  const Tensor acts = extract_activations(ckpt, chw, layer_index);
  const std::vector<img::GrayImage> ups = upsample_channels(acts, cfg.image_size);
  const int k_count = static_cast<int>(ups.size());

  std::atomic<int> passes{0};
  const double baseline =
      class_prob(ckpt, Tensor::zeros(chw.shape), target_class, passes);

  std::vector<double> scores(static_cast<size_t>(k_count), 0.0);
  const size_t plane = static_cast<size_t>(cfg.image_size) * cfg.image_size;
  parallel_for(k_count, threads, [&](int k) {
    const img::GrayImage mask = normalize01(ups[static_cast<size_t>(k)]);
    Tensor masked = chw;
    for (int c = 0; c < cfg.in_channels; ++c) {
      double* chan = &masked.v[static_cast<size_t>(c) * plane];
      for (size_t i = 0; i < plane; ++i) chan[i] *= mask.px[i];
    }
    scores[static_cast<size_t>(k)] = class_prob(ckpt, masked, target_class, passes);
  });

  if (passes.load() != k_count + 1)
    throw RuntimeFailure("gradient-free contract violated: expected " +
                         std::to_string(k_count + 1) + " forward passes, ran " +
                         std::to_string(passes.load()));

  CamResult r = compose_cam(ups, softmax_weights(scores, baseline));
  r.forward_passes = passes.load();
  r.layer_index = layer_index;
  r.target_class = target_class;
  return r;
}

void overlay(const img::GrayImage& base, const CamResult& cam, const std::string& path) {
  if (cam.map.rank() != 2 || base.h != cam.map.dim(0) || base.w != cam.map.dim(1))
    throw ValidationError("overlay base and cam dimensions differ");

  img::RgbImage out(base.h, base.w);
  for (int r = 0; r < base.h; ++r) {
    for (int c = 0; c < base.w; ++c) {
      const double g = std::clamp(base.at(r, c), 0.0, 1.0) * 255.0;
      const double v = std::clamp(cam.map.v[static_cast<size_t>(r) * base.w + c], 0.0, 1.0);
      const double ramp[3] = {255.0, 255.0 * (1.0 - v), 0.0};  // yellow -> red
      const double a = 0.5 * v;                                // low stays transparent
      for (int ch = 0; ch < 3; ++ch) {
        const double mixed = (1.0 - a) * g + a * ramp[ch];
        out.at(r, c, ch) = static_cast<uint8_t>(std::llround(std::clamp(mixed, 0.0, 255.0)));
      }
    }
  }
  img::write_png(path, out);

  std::ofstream side(path + ".txt", std::ios::binary);
  if (!side) throw ValidationError("cannot write overlay sidecar next to " + path);
  const auto [amin, amax] =
      cam.alpha.empty() ? std::pair<double, double>{0.0, 0.0}
                        : std::pair<double, double>{
                              *std::min_element(cam.alpha.begin(), cam.alpha.end()),
                              *std::max_element(cam.alpha.begin(), cam.alpha.end())};
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "#scorecam v1\nlayer=%d\nclass=%d\nalpha_min=%.9g\nalpha_max=%.9g\n"
                "raw_lo=%.9g\nraw_hi=%.9g\n",
                cam.layer_index, cam.target_class, amin, amax, cam.raw_lo, cam.raw_hi);
  side << buf;
  if (!side.good()) throw ValidationError("overlay sidecar write failed for " + path);
}

}  // namespace usf::xai
