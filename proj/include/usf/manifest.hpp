#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace usf::synth {

struct ManifestRecord {
  std::string path;  // image file, relative to the manifest's directory
  int label = 0;     // 0 = normal, 1 = cystic hygroma
  uint64_t seed = 0;
};

struct DatasetManifest {
  uint64_t corpus_seed = 0;
  std::vector<ManifestRecord> records;
  int count(int label) const;
};

// Renders n cases into out_dir (created if missing) and writes
// out_dir/manifest.tsv. Exactly round(n * positive_fraction) cases are
// positive; per-case seeds come from a splitmix derivation of `seed`.
DatasetManifest gen_corpus(int n, double positive_fraction, uint64_t seed,
                           const std::string& out_dir);

// Tab-separated records behind a "#synthgen v1 corpus_seed=<u64>" header.
void write_manifest(const std::string& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::string& path);

}  // namespace usf::synth
