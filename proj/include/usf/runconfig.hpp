#pragma once

#include <cstdint>
#include <string>

#include "usf/model.hpp"
#include "usf/preprocess.hpp"
#include "usf/train.hpp"

namespace usf::cli {

// One flat configuration covering every pipeline stage. Parsed from plain
// text `[section]` / `key=value` files; unknown sections or keys are
// rejected so typos cannot silently fall back to defaults.
struct RunConfig {
  // [global]
  uint64_t seed = 17;
  int threads = 0;  // 0 = hardware concurrency
  std::string out_root = "runs";

  // [synth]
  int synth_n = 200;
  double synth_positive_fraction = 0.5;

  // [preprocess]
  img::PreprocConfig preproc;

  // [model]
  model::ModelConfig model;

  // [pretrain] / [finetune]  (seeds are derived from the global seed)
  train::TrainConfig pretrain;
  train::TrainConfig finetune;
  int folds = 4;

  // [eval]
  double threshold = 0.5;
  std::string model_name = "usfmae";

  // [stats]
  std::string stats_method = "auto";  // auto | exact | normal

  // [xai]
  int xai_layer = -1;  // -1 = final encoder block, resolved after parsing
  int xai_class = 1;

  void validate() const;
};

// Parses configuration text; keys omitted keep their defaults, and the
// sentinel xai layer resolves against the parsed model depth.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

// Fully resolved round-trippable rendering (defaults expanded), fixed key
// order so identical configs serialize byte-identically.
std::string render_config(const RunConfig& cfg);

}  // namespace usf::cli
