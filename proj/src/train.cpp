#include "usf/train.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>
#include <utility>

#include "usf/common.hpp"
#include "usf/image_io.hpp"
#include "usf/manifest.hpp"
#include "usf/optim.hpp"
#include "usf/parallel.hpp"
#include "usf/rng.hpp"
#include "usf/tape.hpp"

namespace usf::train {

namespace {

constexpr double kPi = 3.14159265358979323846;

int hw_threads() { return worker_cap(); }

}  // namespace

// ---------------------------------------------------------------------------
// Fold assignment and class balancing
// ---------------------------------------------------------------------------

FoldSplit make_folds(const std::vector<int>& labels, int k, uint64_t seed) {
  if (k < 2) throw ValidationError("make_folds: k must be at least 2");
  const int n = static_cast<int>(labels.size());
  if (n < k) throw ValidationError("make_folds: fewer samples than folds");

  std::map<int, std::vector<int>> by_class;  // ordered -> deterministic class order
  for (int i = 0; i < n; ++i) by_class[labels[i]].push_back(i);
  for (const auto& [cls, idx] : by_class) {
    if (static_cast<int>(idx.size()) < k) {
      throw ValidationError("make_folds: class " + std::to_string(cls) + " has fewer than " +
                            std::to_string(k) + " members");
    }
  }

  FoldSplit split;
  split.k = k;
  split.seed = seed;
  split.folds.assign(k, {});
  Rng rng(seed);
  // Round-robin per class; the fold offset carries across classes so the
  // leftover samples of successive classes land on different folds, keeping
  // total fold sizes within one of each other as well.
  int offset = 0;
  for (auto& [cls, idx] : by_class) {
    rng.shuffle(idx);
    for (size_t i = 0; i < idx.size(); ++i) {
      split.folds[(offset + static_cast<int>(i)) % k].push_back(idx[i]);
    }
    offset = (offset + static_cast<int>(idx.size())) % k;
  }
  for (auto& fold : split.folds) std::sort(fold.begin(), fold.end());
  return split;
}

std::vector<int> balance_upsample(const std::vector<int>& indices,
                                  const std::vector<int>& labels, uint64_t seed) {
  if (indices.empty()) throw ValidationError("balance_upsample: empty index list");
  std::map<int, std::vector<int>> by_class;
  for (int idx : indices) {
    if (idx < 0 || idx >= static_cast<int>(labels.size())) {
      throw ValidationError("balance_upsample: index out of range");
    }
    by_class[labels[idx]].push_back(idx);
  }
  if (by_class.size() != 2) {
    throw ValidationError("balance_upsample: exactly two classes required, got " +
                          std::to_string(by_class.size()));
  }
  auto first = by_class.begin();
  auto second = std::next(first);
  const std::vector<int>& minority =
      first->second.size() <= second->second.size() ? first->second : second->second;
  const size_t majority_count = std::max(first->second.size(), second->second.size());

  std::vector<int> out = indices;
  Rng rng(seed);
  for (size_t d = minority.size(); d < majority_count; ++d) {
    out.push_back(minority[rng.below(minority.size())]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

void AugmentationPolicy::validate() const {
  if (!(rotation_lo_deg <= rotation_hi_deg) || !std::isfinite(rotation_lo_deg) ||
      !std::isfinite(rotation_hi_deg)) {
    throw ValidationError("augmentation: bad rotation range");
  }
  if (symmetric_rotation && rotation_hi_deg < 0.0) {
    throw ValidationError("augmentation: symmetric rotation needs a nonnegative bound");
  }
  if (!(flip_p >= 0.0 && flip_p <= 1.0)) throw ValidationError("augmentation: flip_p outside [0,1]");
  if (!(zoom_lo > 0.0 && zoom_lo <= zoom_hi) || !std::isfinite(zoom_hi)) {
    throw ValidationError("augmentation: bad zoom range");
  }
  for (int c = 0; c < 3; ++c) {
    if (!std::isfinite(mean[c]) || !(stdev[c] > 0.0)) {
      throw ValidationError("augmentation: bad normalization constants");
    }
  }
}

namespace {

double sample_clamped(const img::GrayImage& g, double r, double c) {
  const double rr = std::min(std::max(r, 0.0), static_cast<double>(g.h - 1));
  const double cc = std::min(std::max(c, 0.0), static_cast<double>(g.w - 1));
  const int r0 = static_cast<int>(std::floor(rr));
  const int c0 = static_cast<int>(std::floor(cc));
  const int r1 = std::min(r0 + 1, g.h - 1);
  const int c1 = std::min(c0 + 1, g.w - 1);
  const double tr = rr - r0;
  const double tc = cc - c0;
  return g.at(r0, c0) * (1.0 - tr) * (1.0 - tc) + g.at(r0, c1) * (1.0 - tr) * tc +
         g.at(r1, c0) * tr * (1.0 - tc) + g.at(r1, c1) * tr * tc;
}

}  // namespace

img::GrayImage rotate_edge(const img::GrayImage& g, double degrees) {
  const double theta = degrees * kPi / 180.0;
  const double ct = std::cos(theta);
  const double st = std::sin(theta);
  const double cr = (g.h - 1) / 2.0;
  const double cc = (g.w - 1) / 2.0;
  img::GrayImage out(g.h, g.w);
  for (int r = 0; r < g.h; ++r) {
    const double y = r - cr;
    for (int c = 0; c < g.w; ++c) {
      const double x = c - cc;
      // Inverse map: rotate the destination offset back into the source.
      const double xs = ct * x + st * y;
      const double ys = -st * x + ct * y;
      out.at(r, c) = sample_clamped(g, cr + ys, cc + xs);
    }
  }
  return out;
}

img::GrayImage flip_h(const img::GrayImage& g) {
  img::GrayImage out(g.h, g.w);
  for (int r = 0; r < g.h; ++r)
    for (int c = 0; c < g.w; ++c) out.at(r, c) = g.at(r, g.w - 1 - c);
  return out;
}

img::GrayImage flip_v(const img::GrayImage& g) {
  img::GrayImage out(g.h, g.w);
  for (int r = 0; r < g.h; ++r)
    for (int c = 0; c < g.w; ++c) out.at(r, c) = g.at(g.h - 1 - r, c);
  return out;
}

img::GrayImage zoom_to(const img::GrayImage& g, double zoom) {
  if (!(zoom > 0.0) || !std::isfinite(zoom)) throw ValidationError("zoom_to: bad factor");
  if (zoom == 1.0) return g;
  if (zoom < 1.0) {
    // Zoom in: keep the central fraction and scale it back up.
    const int ch = std::max(2, static_cast<int>(std::lround(g.h * zoom)));
    const int cw = std::max(2, static_cast<int>(std::lround(g.w * zoom)));
    const int r0 = (g.h - ch) / 2;
    const int c0 = (g.w - cw) / 2;
    img::GrayImage crop(ch, cw);
    for (int r = 0; r < ch; ++r)
      for (int c = 0; c < cw; ++c) crop.at(r, c) = g.at(r0 + r, c0 + c);
    return img::resize_bilinear(crop, g.h, g.w);
  }
  // Zoom out: the content becomes the 1/zoom center of an edge-replicated
  // canvas, which is then scaled back down.
  const int ph = std::max(g.h, static_cast<int>(std::lround(g.h * zoom)));
  const int pw = std::max(g.w, static_cast<int>(std::lround(g.w * zoom)));
  const int r0 = (ph - g.h) / 2;
  const int c0 = (pw - g.w) / 2;
  img::GrayImage pad(ph, pw);
  for (int r = 0; r < ph; ++r) {
    const int sr = std::min(std::max(r - r0, 0), g.h - 1);
    for (int c = 0; c < pw; ++c) {
      const int sc = std::min(std::max(c - c0, 0), g.w - 1);
      pad.at(r, c) = g.at(sr, sc);
    }
  }
  return img::resize_bilinear(pad, g.h, g.w);
}

nd::Tensor replicate_normalize(const img::GrayImage& gray, const AugmentationPolicy& policy,
                               int channels) {
  if (channels != 1 && channels != 3) {
    throw ValidationError("replicate_normalize: channels must be 1 or 3");
  }
  nd::Tensor t({channels, gray.h, gray.w});
  for (int c = 0; c < channels; ++c) {
    const double inv = 1.0 / policy.stdev[c];
    double* dst = t.v.data() + static_cast<size_t>(c) * gray.h * gray.w;
    for (size_t i = 0; i < gray.px.size(); ++i) dst[i] = (gray.px[i] - policy.mean[c]) * inv;
  }
  return t;
}

nd::Tensor augment(const img::GrayImage& gray, const AugmentationPolicy& policy, uint64_t seed,
                   int channels) {
  policy.validate();
  Rng rng(seed);
  const double theta = policy.symmetric_rotation
                           ? rng.uniform(-policy.rotation_hi_deg, policy.rotation_hi_deg)
                           : rng.uniform(policy.rotation_lo_deg, policy.rotation_hi_deg);
  const bool hflip = rng.bernoulli(policy.flip_p);
  const bool vflip = rng.bernoulli(policy.flip_p);
  const double zoom = rng.uniform(policy.zoom_lo, policy.zoom_hi);

  img::GrayImage g = gray;
  if (theta != 0.0) g = rotate_edge(g, theta);
  if (hflip) g = flip_h(g);
  if (vflip) g = flip_v(g);
  if (zoom != 1.0) g = zoom_to(g, zoom);
  return replicate_normalize(g, policy, channels);
}

// ---------------------------------------------------------------------------
// Dataset loading
// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ValidationError("train config: lr must be positive");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
    throw ValidationError("train config: weight_decay must be nonnegative");
  }
  if (epochs < 0) throw ValidationError("train config: epochs must be nonnegative");
  if (batch_size < 1) throw ValidationError("train config: batch_size must be positive");
  if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) {
    throw ValidationError("train config: warmup_fraction outside [0,1]");
  }
  policy.validate();
}

Dataset load_dataset(const std::string& manifest_path, const img::PreprocConfig& pcfg) {
  const synth::DatasetManifest manifest = synth::read_manifest(manifest_path);
  const std::filesystem::path base = std::filesystem::path(manifest_path).parent_path();
  const int n = static_cast<int>(manifest.records.size());

  Dataset data;
  data.images.resize(n);
  data.labels.resize(n);
  data.paths.resize(n);
  parallel_for(n, hw_threads(), [&](int i) {
    const synth::ManifestRecord& rec = manifest.records[i];
    const std::string full = (base / rec.path).string();
    if (full.size() > 8 && full.compare(full.size() - 8, 8, ".grayf64") == 0) {
      // Already materialized by the preprocessing stage; load verbatim.
      img::GrayImage g = img::read_grayf64(full);
      if (g.h != pcfg.target_h || g.w != pcfg.target_w) {
        throw ValidationError("preprocessed image '" + rec.path + "' is " + std::to_string(g.h) +
                              "x" + std::to_string(g.w) + ", expected " +
                              std::to_string(pcfg.target_h) + "x" + std::to_string(pcfg.target_w));
      }
      data.images[i] = std::move(g);
    } else {
      const img::RgbImage rgb = img::read_image(full);
      data.images[i] = img::preprocess_pipeline(rgb, pcfg).image;
    }
    data.labels[i] = rec.label;
    data.paths[i] = rec.path;
  });
  return data;
}

// ---------------------------------------------------------------------------
// Training loops
// ---------------------------------------------------------------------------

namespace {

void check_dataset(const Dataset& data, const model::ModelConfig& mcfg, bool need_labels) {
  if (data.size() == 0) throw ValidationError("training: empty dataset");
  for (int i = 0; i < data.size(); ++i) {
    const img::GrayImage& g = data.images[i];
    if (g.h != mcfg.image_size || g.w != mcfg.image_size) {
      throw ValidationError("training: image " + std::to_string(i) + " is " + std::to_string(g.h) +
                            "x" + std::to_string(g.w) + ", model expects " +
                            std::to_string(mcfg.image_size));
    }
    if (need_labels && (data.labels[i] < 0 || data.labels[i] >= mcfg.class_count)) {
      throw ValidationError("training: label out of range at sample " + std::to_string(i));
    }
  }
}

bool same_config(const model::ModelConfig& a, const model::ModelConfig& b) {
  return a.image_size == b.image_size && a.patch_size == b.patch_size && a.enc_dim == b.enc_dim &&
         a.enc_depth == b.enc_depth && a.enc_heads == b.enc_heads && a.dec_dim == b.dec_dim &&
         a.dec_depth == b.dec_depth && a.dec_heads == b.dec_heads &&
         a.mask_ratio == b.mask_ratio && a.in_channels == b.in_channels &&
         a.class_count == b.class_count && a.normalize_targets == b.normalize_targets &&
         a.use_cls_token == b.use_cls_token;
}

opt::ScheduleConfig schedule_of(const TrainConfig& tcfg) {
  opt::ScheduleConfig s;
  s.base_lr = tcfg.lr;
  s.total_epochs = std::max(1, tcfg.epochs);
  s.warmup_fraction = tcfg.warmup_fraction;
  s.min_lr = 0.0;
  return s;
}

}  // namespace

PretrainResult pretrain(const Dataset& data, const model::ModelConfig& mcfg,
                        const TrainConfig& tcfg, const model::ModelCheckpoint* resume) {
  mcfg.validate();
  tcfg.validate();
  check_dataset(data, mcfg, /*need_labels=*/false);

  model::ParamMap params;
  model::TrainMeta meta;
  if (resume != nullptr) {
    if (!same_config(resume->config, mcfg)) {
      throw ValidationError("pretrain: resume checkpoint configuration mismatch");
    }
    if (tcfg.epochs == 0) return {*resume, {}};
    params = resume->params;
    meta = resume->meta;
  } else {
    params = model::init_params(mcfg, derive_seed(tcfg.seed, "init"), /*with_decoder=*/true,
                                /*with_head=*/false);
  }

  // Self-supervised phase: model inputs are fixed per image (no augmentation).
  std::vector<nd::Tensor> inputs(data.size());
  parallel_for(data.size(), hw_threads(), [&](int i) {
    inputs[i] = replicate_normalize(data.images[i], tcfg.policy, mcfg.in_channels);
  });

  opt::OptimizerState state = opt::init_state(params);
  const opt::ScheduleConfig sched = schedule_of(tcfg);
  const int n = data.size();
  const int batch = std::min(tcfg.batch_size, n);

  PretrainResult result;
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;

  for (int e = 0; e < tcfg.epochs; ++e) {
    const double lr = opt::lr_at(e, sched);
    Rng shuffle_rng(derive_seed(tcfg.seed, "pre.shuffle.e" + std::to_string(e)));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    for (int start = 0; start < n; start += batch) {
      const int stop = std::min(n, start + batch);
      ad::Tape tape;
      model::Forward fwd(tape, mcfg, params);
      int acc = -1;
      for (int pos = start; pos < stop; ++pos) {
        const int idx = order[pos];
        const model::MaskSet mask = model::sample_mask(
            mcfg.n_patches(), mcfg.mask_ratio,
            derive_seed(tcfg.seed, "pre.mask.e" + std::to_string(e) + ".i" + std::to_string(pos)));
        const int loss = fwd.mae(inputs[idx], mask).loss;
        acc = (acc < 0) ? loss : tape.add(acc, loss);
      }
      const int mean_loss = tape.scale(acc, 1.0 / (stop - start));
      const double batch_loss = tape.item(mean_loss);
      if (!std::isfinite(batch_loss)) throw RuntimeFailure("pretrain: non-finite loss");
      tape.backward(mean_loss);
      opt::adamw_step(params, tape.grads(), state, lr, tcfg.weight_decay);
      model::round_params_f32(params);
      loss_sum += batch_loss * (stop - start);
    }
    result.log.push_back({e + 1, lr, loss_sum / n, std::nan("")});
  }

  result.checkpoint.version = 1;
  result.checkpoint.config = mcfg;
  result.checkpoint.params = std::move(params);
  result.checkpoint.meta.epoch = meta.epoch + tcfg.epochs;
  result.checkpoint.meta.val_accuracy = 0.0;
  result.checkpoint.meta.fold = -1;
  result.checkpoint.meta.seed = tcfg.seed;
  return result;
}

namespace {

// Positive-class probability for one sample under the given parameters.
double prob_positive(const model::ModelConfig& mcfg, const model::ParamMap& params,
                     const nd::Tensor& input) {
  ad::Tape tape;
  model::Forward fwd(tape, mcfg, params);
  const model::Forward::ClsOut out = fwd.classify(input);
  return tape.value(out.probs).v[1];
}

}  // namespace

FoldResult finetune_fold(int fold_id, const FoldSplit& split, const Dataset& data,
                         const model::ModelConfig& mcfg, const TrainConfig& tcfg,
                         const model::ParamMap* init_encoder) {
  mcfg.validate();
  tcfg.validate();
  check_dataset(data, mcfg, /*need_labels=*/true);
  if (fold_id < 0 || fold_id >= static_cast<int>(split.folds.size())) {
    throw ValidationError("finetune_fold: fold id out of range");
  }
  if (tcfg.epochs < 1) throw ValidationError("finetune_fold: epochs must be positive");

  const std::vector<int>& val = split.folds[fold_id];
  if (val.empty()) throw ValidationError("finetune_fold: empty validation fold");
  std::set<int> val_set(val.begin(), val.end());

  std::vector<int> train_base;
  for (size_t f = 0; f < split.folds.size(); ++f) {
    if (static_cast<int>(f) == fold_id) continue;
    train_base.insert(train_base.end(), split.folds[f].begin(), split.folds[f].end());
  }
  // Leakage guard: training indices must never touch the validation fold.
  for (int idx : train_base) {
    if (val_set.count(idx)) throw RuntimeFailure("finetune_fold: fold overlap detected");
  }

  const std::string fold_tag = "fold" + std::to_string(fold_id);
  const std::vector<int> train_idx =
      balance_upsample(train_base, data.labels, derive_seed(tcfg.seed, "balance." + fold_tag));

  model::ParamMap params;
  if (init_encoder != nullptr) {
    params = model::finetune_params_from(mcfg, *init_encoder,
                                         derive_seed(tcfg.seed, "head." + fold_tag));
  } else {
    params = model::init_params(mcfg, derive_seed(tcfg.seed, "init." + fold_tag),
                                /*with_decoder=*/false, /*with_head=*/true);
  }

  // Validation inputs are fixed: replication + normalization, never augmented.
  std::vector<nd::Tensor> val_inputs(val.size());
  parallel_for(static_cast<int>(val.size()), hw_threads(), [&](int i) {
    val_inputs[i] = replicate_normalize(data.images[val[i]], tcfg.policy, mcfg.in_channels);
  });

  opt::OptimizerState state = opt::init_state(params);
  const opt::ScheduleConfig sched = schedule_of(tcfg);
  const int n = static_cast<int>(train_idx.size());
  const int batch = std::min(tcfg.batch_size, n);

  FoldResult result;
  result.val_indices = val;
  double best_acc = -1.0;
  int best_epoch = 0;
  model::ParamMap best_params;

  std::vector<int> order = train_idx;
  for (int e = 0; e < tcfg.epochs; ++e) {
    const double lr = opt::lr_at(e, sched);
    Rng shuffle_rng(derive_seed(tcfg.seed, "shuffle." + fold_tag + ".e" + std::to_string(e)));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    for (int start = 0; start < n; start += batch) {
      const int stop = std::min(n, start + batch);
      ad::Tape tape;
      model::Forward fwd(tape, mcfg, params);
      int acc = -1;
      for (int pos = start; pos < stop; ++pos) {
        const int idx = order[pos];
        nd::Tensor input;
        if (tcfg.augment) {
          const uint64_t aug_seed = derive_seed(
              tcfg.seed, "aug." + fold_tag + ".e" + std::to_string(e) + ".i" + std::to_string(pos));
          input = augment(data.images[idx], tcfg.policy, aug_seed, mcfg.in_channels);
        } else {
          input = replicate_normalize(data.images[idx], tcfg.policy, mcfg.in_channels);
        }
        const int loss = tape.cross_entropy(fwd.classify(input).logits, {data.labels[idx]});
        acc = (acc < 0) ? loss : tape.add(acc, loss);
      }
      const int mean_loss = tape.scale(acc, 1.0 / (stop - start));
      const double batch_loss = tape.item(mean_loss);
      if (!std::isfinite(batch_loss)) throw RuntimeFailure("finetune_fold: non-finite loss");
      tape.backward(mean_loss);
      opt::adamw_step(params, tape.grads(), state, lr, tcfg.weight_decay);
      model::round_params_f32(params);
      loss_sum += batch_loss * (stop - start);
    }

    int correct = 0;
    for (size_t i = 0; i < val.size(); ++i) {
      const double p = prob_positive(mcfg, params, val_inputs[i]);
      const int pred = p >= 0.5 ? 1 : 0;  // boundary counts positive
      if (pred == data.labels[val[i]]) ++correct;
    }
    const double val_acc = static_cast<double>(correct) / static_cast<double>(val.size());
    result.log.push_back({e + 1, lr, loss_sum / n, val_acc});

    if (val_acc > best_acc) {  // strict: ties keep the earliest epoch
      best_acc = val_acc;
      best_epoch = e + 1;
      best_params = params;
    }
  }

  result.best.version = 1;
  result.best.config = mcfg;
  result.best.params = std::move(best_params);
  result.best.meta.epoch = best_epoch;
  result.best.meta.val_accuracy = best_acc;
  result.best.meta.fold = fold_id;
  result.best.meta.seed = tcfg.seed;

  result.val_probs.resize(val.size());
  for (size_t i = 0; i < val.size(); ++i) {
    result.val_probs[i] = prob_positive(mcfg, result.best.params, val_inputs[i]);
  }
  return result;
}

CrossvalResult run_crossval(const Dataset& data, const model::ModelConfig& mcfg,
                            const TrainConfig& tcfg, int k,
                            const model::ParamMap* init_encoder) {
  CrossvalResult result;
  result.split = make_folds(data.labels, k, derive_seed(tcfg.seed, "folds"));
  for (int f = 0; f < k; ++f) {
    result.folds.push_back(finetune_fold(f, result.split, data, mcfg, tcfg, init_encoder));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Prediction and log files
// ---------------------------------------------------------------------------

void write_predictions(const std::string& path, int fold_id, const Dataset& data,
                       const FoldResult& fold) {
  if (fold.val_indices.size() != fold.val_probs.size()) {
    throw ValidationError("write_predictions: index/probability count mismatch");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("write_predictions: cannot open '" + path + "'");
  out << "#predictions fold=" << fold_id << "\n";
  char buf[64];
  for (size_t i = 0; i < fold.val_indices.size(); ++i) {
    const int idx = fold.val_indices[i];
    std::snprintf(buf, sizeof buf, "%.9g", fold.val_probs[i]);
    out << data.paths[idx] << "\t" << data.labels[idx] << "\t" << buf << "\n";
  }
  if (!out) throw ValidationError("write_predictions: write failed for '" + path + "'");
}

std::vector<PredictionRow> read_predictions(const std::string& path, int* fold_id) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("read_predictions: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("read_predictions: empty file '" + path + "'");
  int fold = -1;
  if (std::sscanf(line.c_str(), "#predictions fold=%d", &fold) != 1) {
    throw ValidationError("read_predictions: bad header in '" + path + "'");
  }
  if (fold_id != nullptr) *fold_id = fold;

  std::vector<PredictionRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const size_t t1 = line.find('\t');
    const size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) {
      throw ValidationError("read_predictions: malformed row in '" + path + "'");
    }
    PredictionRow row;
    row.path = line.substr(0, t1);
    try {
      row.label = std::stoi(line.substr(t1 + 1, t2 - t1 - 1));
      row.prob = std::stod(line.substr(t2 + 1));
    } catch (const std::exception&) {
      throw ValidationError("read_predictions: malformed row in '" + path + "'");
    }
    if (row.label != 0 && row.label != 1) {
      throw ValidationError("read_predictions: label must be 0 or 1 in '" + path + "'");
    }
    if (!(row.prob >= 0.0 && row.prob <= 1.0)) {
      throw ValidationError("read_predictions: probability outside [0,1] in '" + path + "'");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_log(const std::string& path, const std::vector<EpochLog>& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("write_log: cannot open '" + path + "'");
  out << "epoch\tlr\ttrain_loss\tval_acc\n";
  char lr_buf[64], loss_buf[64], acc_buf[64];
  for (const EpochLog& row : log) {
    std::snprintf(lr_buf, sizeof lr_buf, "%.9g", row.lr);
    std::snprintf(loss_buf, sizeof loss_buf, "%.9g", row.train_loss);
    if (std::isnan(row.val_acc)) {
      std::snprintf(acc_buf, sizeof acc_buf, "-");
    } else {
      std::snprintf(acc_buf, sizeof acc_buf, "%.9g", row.val_acc);
    }
    out << row.epoch << "\t" << lr_buf << "\t" << loss_buf << "\t" << acc_buf << "\n";
  }
  if (!out) throw ValidationError("write_log: write failed for '" + path + "'");
}

}  // namespace usf::train
