#pragma once

#include <string>
#include <vector>

#include "usf/checkpoint.hpp"
#include "usf/image.hpp"
#include "usf/tensor.hpp"

namespace usf::xai {

// Class activation map plus the bookkeeping the overlay sidecar records.
struct CamResult {
  nd::Tensor map;             // [S, S] saliency, min-max normalized to [0, 1]
  std::vector<double> alpha;  // per-channel weights, softmax (sum to 1)
  double raw_lo = 0.0;        // pre-normalization bounds of the ReLU'd sum
  double raw_hi = 0.0;
  int forward_passes = 0;  // exactly K + 1 (channels plus the zero baseline)
  int layer_index = 0;
  int target_class = 0;
};

// Token outputs of encoder block `layer_index` reshaped to the patch grid,
// channel-major: [enc_dim, grid, grid]. Any non-spatial token is dropped.
// Works on encoder-only (pretraining) checkpoints as well.
nd::Tensor extract_activations(const model::ModelCheckpoint& ckpt, const nd::Tensor& chw,
                               int layer_index);

// Bilinear upsampling of every activation channel to out_size x out_size.
std::vector<img::GrayImage> upsample_channels(const nd::Tensor& activations, int out_size);

// Min-max rescale to [0, 1]; a flat plane maps to all zeros.
img::GrayImage normalize01(const img::GrayImage& plane);

// softmax over (scores[k] - baseline); weights sum to 1.
std::vector<double> softmax_weights(const std::vector<double>& scores, double baseline);

// ReLU(sum_k alpha[k] * channels[k]) followed by min-max normalization;
// fills map/alpha/raw bounds of the result. Exposed so the channel
// permutation invariance is directly checkable.
CamResult compose_cam(const std::vector<img::GrayImage>& channels,
                      const std::vector<double>& alpha);

// Full pipeline: K masked forward passes plus one all-zero baseline pass,
// channel weights from the target-class softmax scores. The pass count is
// instrumented and asserted (the map is built without any gradient).
CamResult score_cam(const model::ModelCheckpoint& ckpt, const nd::Tensor& chw, int target_class,
                    int layer_index, int threads = 1);

// Composite PNG: grayscale base (values clamped to [0, 1]) under a warm ramp
// (yellow -> red) alpha-blended at 0.5 * cam, plus a sidecar text file
// `<path>.txt` recording layer, class, weight range, and raw bounds.
void overlay(const img::GrayImage& base, const CamResult& cam, const std::string& path);

}  // namespace usf::xai
