#pragma once

#include <cstdint>
#include <string>

#include "usf/model.hpp"

namespace usf::model {

struct TrainMeta {
  int epoch = 0;
  double val_accuracy = 0.0;
  int fold = -1;
  uint64_t seed = 0;
};

// Binary container: magic "USFMAE1\0", length-prefixed key=value config
// blob, then per-parameter records (name, extents, little-endian f32 data).
struct ModelCheckpoint {
  int version = 1;
  ModelConfig config;
  ParamMap params;
  TrainMeta meta;
};

void save_checkpoint(const std::string& path, const ModelCheckpoint& ckpt);
ModelCheckpoint load_checkpoint(const std::string& path);

}  // namespace usf::model
