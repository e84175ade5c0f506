#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "usf/tape.hpp"
#include "usf/tensor.hpp"

namespace usf::model {

struct ModelConfig {
  int image_size = 224;
  int patch_size = 16;
  int enc_dim = 64;
  int enc_depth = 4;
  int enc_heads = 4;
  int dec_dim = 32;
  int dec_depth = 2;
  int dec_heads = 2;
  double mask_ratio = 0.25;
  int in_channels = 3;
  int class_count = 2;
  bool normalize_targets = true;  // per-patch zero-mean/unit-var targets
  bool use_cls_token = false;     // default: mean pooling over all tokens

  int patches_per_side() const { return image_size / patch_size; }
  int n_patches() const { return patches_per_side() * patches_per_side(); }
  int patch_vec() const { return in_channels * patch_size * patch_size; }
  void validate() const;
};

using ParamMap = std::map<std::string, nd::Tensor>;

struct MaskSet {
  std::vector<int> visible;  // ascending patch indices the encoder sees
  std::vector<int> masked;   // ascending patch indices to reconstruct
  uint64_t seed = 0;
};

// [C,H,W] -> [N, C*P*P]; patches raster-major over the patch grid, each row
// flattened channel-major then row-major inside the patch.
nd::Tensor patchify(const nd::Tensor& chw, int patch_size);
nd::Tensor unpatchify(const nd::Tensor& patches, int patch_size, int channels, int h, int w);

// Uniform sample without replacement via seeded shuffle; the masked count is
// round(mask_ratio * n) clamped to [1, n-1].
MaskSet sample_mask(int n_patches, double mask_ratio, uint64_t seed);

// Fixed sinusoidal position table (decoder positions).
nd::Tensor sinusoidal_positions(int n, int dim);

// Named parameter inventory generated by the config; with_decoder /
// with_head select the reconstruction and classification groups.
std::vector<std::pair<std::string, nd::Shape>> param_specs(const ModelConfig& cfg,
                                                           bool with_decoder,
                                                           bool with_head);
ParamMap init_params(const ModelConfig& cfg, uint64_t seed, bool with_decoder,
                     bool with_head);

// Rounds every value to the nearest 32-bit float so checkpoints (which store
// f32 payloads) round-trip bit-exactly.
void round_params_f32(ParamMap& params);

// Classifier parameter set built from a pretrained map: every encoder
// parameter is copied bit-for-bit, decoder parameters are dropped, and the
// head is freshly initialized from head_seed.
ParamMap finetune_params_from(const ModelConfig& cfg, const ParamMap& pretrained,
                              uint64_t head_seed);

// Shares parameter tape nodes across the samples of one batch so gradients
// accumulate on a single node per parameter.
class Forward {
 public:
  Forward(ad::Tape& tape, const ModelConfig& cfg, const ParamMap& params);

  struct MaeOut {
    int loss = 0;        // scalar node
    int recon = 0;       // [N, C*P*P] node, reconstruction of every patch
    nd::Tensor target;   // the (possibly per-patch-normalized) regression target
  };
  // Optional target_override replaces the patch-derived regression target.
  MaeOut mae(const nd::Tensor& chw, const MaskSet& mask,
             const nd::Tensor* target_override = nullptr);

  struct ClsOut {
    int logits = 0;  // [1, class_count]
    int probs = 0;   // softmax of logits
  };
  ClsOut classify(const nd::Tensor& chw);

  // Encoder stack over the given patch indices; returns the [T, enc_dim]
  // token node after the final layer norm.
  int encode(const nd::Tensor& patch_rows, const std::vector<int>& positions);

  // When set, encode() appends each transformer block's output node (taken
  // before the final layer norm) to the sink, one entry per encoder layer.
  void trace_blocks(std::vector<int>* sink) { block_trace_ = sink; }

  ad::Tape& tape() { return tape_; }

 private:
  int pid(const std::string& name);
  int block(int x, const std::string& prefix, int dim, int heads);

  ad::Tape& tape_;
  const ModelConfig& cfg_;
  const ParamMap& params_;
  std::map<std::string, int> ids_;
  std::vector<int>* block_trace_ = nullptr;
};

}  // namespace usf::model
