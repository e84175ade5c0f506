#include "usf/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "usf/rng.hpp"

namespace usf::model {

using nd::Shape;
using nd::Tensor;

void ModelConfig::validate() const {
  if (image_size <= 0 || patch_size <= 0 || image_size % patch_size != 0)
    throw ValidationError("image size must be a positive multiple of the patch size");
  if (enc_dim <= 0 || enc_depth <= 0 || enc_heads <= 0 || enc_dim % enc_heads != 0)
    throw ValidationError("encoder dim must be divisible by encoder heads");
  if (dec_dim <= 0 || dec_depth <= 0 || dec_heads <= 0 || dec_dim % dec_heads != 0)
    throw ValidationError("decoder dim must be divisible by decoder heads");
  if (!(mask_ratio > 0.0 && mask_ratio < 1.0))
    throw ValidationError("mask ratio must lie strictly between 0 and 1");
  if (in_channels <= 0 || class_count < 2)
    throw ValidationError("need at least one channel and two classes");
}

nd::Tensor patchify(const Tensor& chw, int patch_size) {
  if (chw.rank() != 3)
    throw ValidationError("patchify expects a [C,H,W] tensor, got " + nd::shape_str(chw.shape));
  const int c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
  if (patch_size <= 0 || h % patch_size != 0 || w % patch_size != 0)
    throw ValidationError("image dims " + nd::shape_str(chw.shape) +
                          " are not divisible by patch size " + std::to_string(patch_size));
  const int gh = h / patch_size, gw = w / patch_size;
  Tensor out = Tensor::zeros({gh * gw, c * patch_size * patch_size});
  for (int py = 0; py < gh; ++py)
    for (int px = 0; px < gw; ++px) {
      const int row = py * gw + px;
      double* dst = &out.v[static_cast<size_t>(row) * out.dim(1)];
      for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < patch_size; ++y)
          for (int x = 0; x < patch_size; ++x)
            *dst++ = chw.v[(static_cast<size_t>(ch) * h + py * patch_size + y) * w +
                           px * patch_size + x];
    }
  return out;
}

nd::Tensor unpatchify(const Tensor& patches, int patch_size, int channels, int h, int w) {
  if (patches.rank() != 2)
    throw ValidationError("unpatchify expects a patch matrix, got " +
                          nd::shape_str(patches.shape));
  const int gh = h / patch_size, gw = w / patch_size;
  if (patch_size <= 0 || h % patch_size != 0 || w % patch_size != 0 ||
      patches.dim(0) != gh * gw || patches.dim(1) != channels * patch_size * patch_size)
    throw ValidationError("patch matrix " + nd::shape_str(patches.shape) +
                          " does not tile a " + std::to_string(channels) + "x" +
                          std::to_string(h) + "x" + std::to_string(w) + " image");
  Tensor out = Tensor::zeros({channels, h, w});
  for (int py = 0; py < gh; ++py)
    for (int px = 0; px < gw; ++px) {
      const int row = py * gw + px;
      const double* src = &patches.v[static_cast<size_t>(row) * patches.dim(1)];
      for (int ch = 0; ch < channels; ++ch)
        for (int y = 0; y < patch_size; ++y)
          for (int x = 0; x < patch_size; ++x)
            out.v[(static_cast<size_t>(ch) * h + py * patch_size + y) * w + px * patch_size +
                  x] = *src++;
    }
  return out;
}

MaskSet sample_mask(int n_patches, double mask_ratio, uint64_t seed) {
  if (n_patches < 2) throw ValidationError("need at least 2 patches to mask");
  if (!(mask_ratio > 0.0 && mask_ratio < 1.0))
    throw ValidationError("mask ratio must lie strictly between 0 and 1");
  std::vector<int> order(static_cast<size_t>(n_patches));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  const int k = std::clamp(static_cast<int>(std::lround(mask_ratio * n_patches)), 1,
                           n_patches - 1);
  MaskSet m;
  m.seed = seed;
  m.masked.assign(order.begin(), order.begin() + k);
  m.visible.assign(order.begin() + k, order.end());
  std::sort(m.masked.begin(), m.masked.end());
  std::sort(m.visible.begin(), m.visible.end());
  return m;
}

nd::Tensor sinusoidal_positions(int n, int dim) {
  Tensor out = Tensor::zeros({n, dim});
  for (int p = 0; p < n; ++p)
    for (int i = 0; i < dim; i += 2) {
      const double f = std::pow(10000.0, -static_cast<double>(i) / dim);
      out.v[static_cast<size_t>(p) * dim + i] = std::sin(p * f);
      if (i + 1 < dim) out.v[static_cast<size_t>(p) * dim + i + 1] = std::cos(p * f);
    }
  return out;
}

namespace {

void block_specs(std::vector<std::pair<std::string, Shape>>& out, const std::string& prefix,
                 int depth, int dim) {
  for (int l = 0; l < depth; ++l) {
    const std::string p = prefix + ".L" + std::to_string(l) + ".";
    out.emplace_back(p + "ln1.g", Shape{dim});
    out.emplace_back(p + "ln1.b", Shape{dim});
    for (const char* w : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"})
      out.emplace_back(p + w, Shape{dim, dim});
    for (const char* b : {"attn.bq", "attn.bk", "attn.bv", "attn.bo"})
      out.emplace_back(p + b, Shape{dim});
    out.emplace_back(p + "ln2.g", Shape{dim});
    out.emplace_back(p + "ln2.b", Shape{dim});
    out.emplace_back(p + "mlp.w1", Shape{dim, 4 * dim});
    out.emplace_back(p + "mlp.b1", Shape{4 * dim});
    out.emplace_back(p + "mlp.w2", Shape{4 * dim, dim});
    out.emplace_back(p + "mlp.b2", Shape{dim});
  }
}

}  // namespace

std::vector<std::pair<std::string, Shape>> param_specs(const ModelConfig& cfg,
                                                       bool with_decoder, bool with_head) {
  cfg.validate();
  std::vector<std::pair<std::string, Shape>> out;
  out.emplace_back("patch_embed.w", Shape{cfg.patch_vec(), cfg.enc_dim});
  out.emplace_back("patch_embed.b", Shape{cfg.enc_dim});
  out.emplace_back("enc_pos", Shape{cfg.n_patches(), cfg.enc_dim});
  if (cfg.use_cls_token) out.emplace_back("cls_token", Shape{1, cfg.enc_dim});
  block_specs(out, "enc", cfg.enc_depth, cfg.enc_dim);
  out.emplace_back("enc.ln_f.g", Shape{cfg.enc_dim});
  out.emplace_back("enc.ln_f.b", Shape{cfg.enc_dim});
  if (with_decoder) {
    out.emplace_back("dec_embed.w", Shape{cfg.enc_dim, cfg.dec_dim});
    out.emplace_back("dec_embed.b", Shape{cfg.dec_dim});
    out.emplace_back("mask_token", Shape{1, cfg.dec_dim});
    block_specs(out, "dec", cfg.dec_depth, cfg.dec_dim);
    out.emplace_back("dec.ln_f.g", Shape{cfg.dec_dim});
    out.emplace_back("dec.ln_f.b", Shape{cfg.dec_dim});
    out.emplace_back("dec_pred.w", Shape{cfg.dec_dim, cfg.patch_vec()});
    out.emplace_back("dec_pred.b", Shape{cfg.patch_vec()});
  }
  if (with_head) {
    out.emplace_back("head.w", Shape{cfg.enc_dim, cfg.class_count});
    out.emplace_back("head.b", Shape{cfg.class_count});
  }
  return out;
}

ParamMap init_params(const ModelConfig& cfg, uint64_t seed, bool with_decoder,
                     bool with_head) {
  ParamMap params;
  for (const auto& [name, shape] : param_specs(cfg, with_decoder, with_head)) {
    const bool is_gain = name.size() >= 2 && name.compare(name.size() - 2, 2, ".g") == 0;
    const bool is_bias = (name.size() >= 2 && name.compare(name.size() - 2, 2, ".b") == 0) ||
                         name.compare(name.size() - 3, 3, ".b1") == 0 ||
                         name.compare(name.size() - 3, 3, ".b2") == 0 ||
                         name.find("attn.b") != std::string::npos;
    if (is_gain) {
      params.emplace(name, Tensor::full(shape, 1.0));
    } else if (is_bias) {
      params.emplace(name, Tensor::zeros(shape));
    } else {
      Rng rng(derive_seed(seed, name));
      Tensor t = Tensor::zeros(shape);
      for (double& v : t.v) v = rng.normal(0.0, 0.02);
      params.emplace(name, std::move(t));
    }
  }
  round_params_f32(params);
  return params;
}

void round_params_f32(ParamMap& params) {
  for (auto& [name, t] : params)
    for (double& v : t.v) v = static_cast<double>(static_cast<float>(v));
}

ParamMap finetune_params_from(const ModelConfig& cfg, const ParamMap& pretrained,
                              uint64_t head_seed) {
  ParamMap out = init_params(cfg, head_seed, false, true);
  for (const auto& [name, shape] : param_specs(cfg, false, false)) {
    auto it = pretrained.find(name);
    if (it == pretrained.end())
      throw ValidationError("pretrained parameters miss encoder parameter '" + name + "'");
    if (it->second.shape != shape)
      throw ValidationError("encoder parameter '" + name + "' has shape " +
                            nd::shape_str(it->second.shape) + ", config requires " +
                            nd::shape_str(shape));
    out.at(name) = it->second;
  }
  return out;
}

Forward::Forward(ad::Tape& tape, const ModelConfig& cfg, const ParamMap& params)
    : tape_(tape), cfg_(cfg), params_(params) {
  cfg.validate();
}

int Forward::pid(const std::string& name) {
  auto it = ids_.find(name);
  if (it != ids_.end()) return it->second;
  auto p = params_.find(name);
  if (p == params_.end()) throw ValidationError("missing parameter '" + name + "'");
  const int id = tape_.param(name, p->second);
  ids_.emplace(name, id);
  return id;
}

int Forward::block(int x, const std::string& prefix, int dim, int heads) {
  const int t = tape_.value(x).dim(0);
  const int dh = dim / heads;
  // attention over pre-norm tokens
  int h = tape_.layer_norm(x, pid(prefix + ".ln1.g"), pid(prefix + ".ln1.b"));
  auto proj = [&](const char* w, const char* b) {
    return tape_.add(tape_.matmul(h, pid(prefix + ".attn.w" + std::string(w))),
                     pid(prefix + ".attn.b" + std::string(b)));
  };
  const int q = proj("q", "q"), k = proj("k", "k"), v = proj("v", "v");
  auto heads_first = [&](int z) {
    return tape_.permute(tape_.reshape(z, {t, heads, dh}), {1, 0, 2});
  };
  const int qh = heads_first(q);                                       // [H,T,dh]
  const int kt = tape_.permute(tape_.reshape(k, {t, heads, dh}), {1, 2, 0});  // [H,dh,T]
  const int vh = heads_first(v);
  const int scores = tape_.scale(tape_.matmul(qh, kt), 1.0 / std::sqrt(dh));
  const int attn = tape_.softmax(scores);
  const int mixed = tape_.matmul(attn, vh);  // [H,T,dh]
  const int merged = tape_.reshape(tape_.permute(mixed, {1, 0, 2}), {t, dim});
  const int out = tape_.add(tape_.matmul(merged, pid(prefix + ".attn.wo")),
                            pid(prefix + ".attn.bo"));
  x = tape_.add(x, out);
  // MLP
  int m = tape_.layer_norm(x, pid(prefix + ".ln2.g"), pid(prefix + ".ln2.b"));
  m = tape_.gelu(tape_.add(tape_.matmul(m, pid(prefix + ".mlp.w1")), pid(prefix + ".mlp.b1")));
  m = tape_.add(tape_.matmul(m, pid(prefix + ".mlp.w2")), pid(prefix + ".mlp.b2"));
  return tape_.add(x, m);
}

int Forward::encode(const Tensor& patch_rows, const std::vector<int>& positions) {
  if (patch_rows.rank() != 2 || patch_rows.dim(1) != cfg_.patch_vec())
    throw ValidationError("encoder input " + nd::shape_str(patch_rows.shape) +
                          " does not match the patch vector length " +
                          std::to_string(cfg_.patch_vec()));
  if (static_cast<int>(positions.size()) != patch_rows.dim(0))
    throw ValidationError("one patch-grid position is required per token");
  const int x = tape_.input(patch_rows);
  int e = tape_.add(tape_.matmul(x, pid("patch_embed.w")), pid("patch_embed.b"));
  e = tape_.add(e, tape_.gather_rows(pid("enc_pos"), positions));
  if (cfg_.use_cls_token) {
    const int t = patch_rows.dim(0);
    std::vector<int> shifted(static_cast<size_t>(t));
    std::iota(shifted.begin(), shifted.end(), 1);
    e = tape_.add(tape_.scatter_rows(e, shifted, t + 1),
                  tape_.scatter_rows(pid("cls_token"), {0}, t + 1));
  }
  for (int l = 0; l < cfg_.enc_depth; ++l) {
    e = block(e, "enc.L" + std::to_string(l), cfg_.enc_dim, cfg_.enc_heads);
    if (block_trace_) block_trace_->push_back(e);
  }
  return tape_.layer_norm(e, pid("enc.ln_f.g"), pid("enc.ln_f.b"));
}

Forward::MaeOut Forward::mae(const Tensor& chw, const MaskSet& mask,
                             const Tensor* target_override) {
  const Tensor patches = patchify(chw, cfg_.patch_size);
  const int n = cfg_.n_patches();
  if (patches.dim(0) != n)
    throw ValidationError("image does not produce the configured patch count");
  if (mask.visible.empty() || mask.masked.empty() ||
      static_cast<int>(mask.visible.size() + mask.masked.size()) != n)
    throw ValidationError("mask must partition the patch set with both sides non-empty");
  if (cfg_.use_cls_token)
    throw ValidationError("masked pretraining runs without a cls token");

  Tensor visible_rows = Tensor::zeros({static_cast<int>(mask.visible.size()), patches.dim(1)});
  for (size_t i = 0; i < mask.visible.size(); ++i)
    std::copy_n(&patches.v[static_cast<size_t>(mask.visible[i]) * patches.dim(1)],
                patches.dim(1), &visible_rows.v[i * static_cast<size_t>(patches.dim(1))]);

  const int encoded = encode(visible_rows, mask.visible);

  // project to decoder width, re-insert masked slots, add fixed positions
  int dv = tape_.add(tape_.matmul(encoded, pid("dec_embed.w")), pid("dec_embed.b"));
  const int placed = tape_.scatter_rows(dv, mask.visible, n);
  const int mask_tok = tape_.tile_rows(pid("mask_token"), static_cast<int>(mask.masked.size()));
  const int filled = tape_.add(placed, tape_.scatter_rows(mask_tok, mask.masked, n));
  int d = tape_.add(filled, tape_.input(sinusoidal_positions(n, cfg_.dec_dim)));
  for (int l = 0; l < cfg_.dec_depth; ++l)
    d = block(d, "dec.L" + std::to_string(l), cfg_.dec_dim, cfg_.dec_heads);
  d = tape_.layer_norm(d, pid("dec.ln_f.g"), pid("dec.ln_f.b"));
  const int recon = tape_.add(tape_.matmul(d, pid("dec_pred.w")), pid("dec_pred.b"));

  MaeOut out;
  out.recon = recon;
  if (target_override) {
    if (!target_override->same_shape(patches))
      throw ValidationError("target override must match the patch matrix shape");
    out.target = *target_override;
  } else {
    out.target = patches;
    if (cfg_.normalize_targets) {
      const int width = out.target.dim(1);
      for (int r = 0; r < n; ++r) {
        double* row = &out.target.v[static_cast<size_t>(r) * width];
        double mean = 0.0;
        for (int i = 0; i < width; ++i) mean += row[i];
        mean /= width;
        double var = 0.0;
        for (int i = 0; i < width; ++i) var += (row[i] - mean) * (row[i] - mean);
        var /= width;
        const double inv = 1.0 / std::sqrt(var + 1e-6);
        for (int i = 0; i < width; ++i) row[i] = (row[i] - mean) * inv;
      }
    }
  }
  out.loss = tape_.mse_masked(recon, tape_.input(out.target), mask.masked);
  return out;
}

Forward::ClsOut Forward::classify(const Tensor& chw) {
  const Tensor patches = patchify(chw, cfg_.patch_size);
  if (patches.dim(0) != cfg_.n_patches())
    throw ValidationError("image does not produce the configured patch count");
  std::vector<int> all(static_cast<size_t>(cfg_.n_patches()));
  std::iota(all.begin(), all.end(), 0);
  const int tokens = encode(patches, all);
  const int pooled = cfg_.use_cls_token
                         ? tape_.gather_rows(tokens, {0})
                         : tape_.reshape(tape_.mean_axis(tokens, 0), {1, cfg_.enc_dim});
  const int head_w = pid("head.w");
  const int head_b = pid("head.b");
  ClsOut out;
  out.logits = tape_.add(tape_.matmul(pooled, head_w), head_b);
  out.probs = tape_.softmax(out.logits);
  return out;
}

}  // namespace usf::model
