#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "usf/checkpoint.hpp"
#include "usf/model.hpp"
#include "usf/preprocess.hpp"

namespace usf::train {

struct FoldSplit {
  int k = 0;
  uint64_t seed = 0;
  std::vector<std::vector<int>> folds;  // ascending sample indices per fold
};

// Seeded shuffle then round-robin assignment per class; the fold offset
// carries over between classes so total fold sizes also differ by at most 1.
FoldSplit make_folds(const std::vector<int>& labels, int k, uint64_t seed);

// Appends minority-class indices drawn with replacement until both classes
// count the same; the input order is preserved and the majority untouched.
std::vector<int> balance_upsample(const std::vector<int>& indices,
                                  const std::vector<int>& labels, uint64_t seed);

struct AugmentationPolicy {
  double rotation_lo_deg = 0.0;
  double rotation_hi_deg = 90.0;
  bool symmetric_rotation = false;  // ablation: sample U[-hi, hi] instead
  double flip_p = 0.5;
  double zoom_lo = 0.5;
  double zoom_hi = 2.0;
  double mean[3] = {0.485, 0.456, 0.406};  // applied after channel replication
  double stdev[3] = {0.229, 0.224, 0.225};
  void validate() const;
};

// Geometric building blocks, exposed for direct testing.
img::GrayImage rotate_edge(const img::GrayImage& g, double degrees);  // bilinear, edge pad
img::GrayImage flip_h(const img::GrayImage& g);
img::GrayImage flip_v(const img::GrayImage& g);
// zoom < 1: central crop of fraction z, resized back up; zoom > 1: edge-pad
// to z times the size (content occupies the 1/z center), resized back down.
img::GrayImage zoom_to(const img::GrayImage& g, double zoom);

// Training-time transform: rotate -> flips -> zoom -> channel replication ->
// per-channel normalization. Returns [channels,H,W]; geometry is preserved,
// so inputs must already be at the model's resolution.
nd::Tensor augment(const img::GrayImage& gray, const AugmentationPolicy& policy,
                   uint64_t seed, int channels = 3);
// Validation-time transform: replication and normalization only.
nd::Tensor replicate_normalize(const img::GrayImage& gray, const AugmentationPolicy& policy,
                               int channels = 3);

struct TrainConfig {
  double lr = 1e-3;
  double weight_decay = 1e-4;
  int epochs = 100;
  int batch_size = 64;
  double warmup_fraction = 0.1;
  uint64_t seed = 0;
  bool augment = true;
  AugmentationPolicy policy;
  void validate() const;
};

struct EpochLog {
  int epoch = 0;  // 1-based in logs
  double lr = 0.0;
  double train_loss = 0.0;
  double val_acc = 0.0;  // NaN when the phase has no validation (pretraining)
};

struct Dataset {
  std::vector<img::GrayImage> images;  // preprocessed, 224x224 standardized
  std::vector<int> labels;
  std::vector<std::string> paths;  // as recorded in the manifest
  int size() const { return static_cast<int>(images.size()); }
};

// Reads the manifest, loads every image and runs the preprocessing chain.
Dataset load_dataset(const std::string& manifest_path, const img::PreprocConfig& pcfg);

struct PretrainResult {
  model::ModelCheckpoint checkpoint;
  std::vector<EpochLog> log;
};

// Self-supervised masked-reconstruction training over the whole dataset
// (labels ignored). With a resume checkpoint and zero epochs this is a no-op.
PretrainResult pretrain(const Dataset& data, const model::ModelConfig& mcfg,
                        const TrainConfig& tcfg,
                        const model::ModelCheckpoint* resume = nullptr);

struct FoldResult {
  model::ModelCheckpoint best;  // highest validation accuracy; ties -> earliest
  std::vector<EpochLog> log;
  std::vector<int> val_indices;
  std::vector<double> val_probs;  // positive-class probability from `best`
};

// init_encoder: pretrained parameter map (encoder weights copied, head fresh);
// nullptr trains from scratch.
FoldResult finetune_fold(int fold_id, const FoldSplit& split, const Dataset& data,
                         const model::ModelConfig& mcfg, const TrainConfig& tcfg,
                         const model::ParamMap* init_encoder = nullptr);

struct CrossvalResult {
  FoldSplit split;
  std::vector<FoldResult> folds;
};

CrossvalResult run_crossval(const Dataset& data, const model::ModelConfig& mcfg,
                            const TrainConfig& tcfg, int k,
                            const model::ParamMap* init_encoder = nullptr);

struct PredictionRow {
  std::string path;
  int label = 0;
  double prob = 0.0;  // positive-class probability
};

void write_predictions(const std::string& path, int fold_id, const Dataset& data,
                       const FoldResult& fold);
std::vector<PredictionRow> read_predictions(const std::string& path, int* fold_id = nullptr);
void write_log(const std::string& path, const std::vector<EpochLog>& log);

}  // namespace usf::train
