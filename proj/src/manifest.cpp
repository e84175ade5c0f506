#include "usf/manifest.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "usf/image_io.hpp"
#include "usf/parallel.hpp"
#include "usf/rng.hpp"
#include "usf/synth.hpp"

namespace usf::synth {

int DatasetManifest::count(int label) const {
  int n = 0;
  for (const ManifestRecord& r : records) n += r.label == label;
  return n;
}

void write_manifest(const std::string& path, const DatasetManifest& manifest) {
  std::set<std::string> seen;
  for (const ManifestRecord& r : manifest.records)
    if (!seen.insert(r.path).second)
      throw ValidationError("duplicate manifest path '" + r.path + "'");
  std::ofstream out(path, std::ios::binary);
  if (!out.good()) throw ValidationError(path + ": cannot open for writing");
  char head[64];
  std::snprintf(head, sizeof(head), "#synthgen v1 corpus_seed=%" PRIu64,
                manifest.corpus_seed);
  out << head << "\n";
  for (const ManifestRecord& r : manifest.records)
    out << r.path << "\t" << label_name(r.label) << "\t" << r.seed << "\n";
  if (!out.good()) throw ValidationError(path + ": write failed");
}

DatasetManifest read_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) throw ValidationError(path + ": cannot open manifest");
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path + ": empty manifest");
  DatasetManifest m;
  uint64_t seed = 0;
  if (std::sscanf(line.c_str(), "#synthgen v1 corpus_seed=%" SCNu64, &seed) != 1)
    throw ValidationError(path + ": bad manifest header '" + line + "'");
  m.corpus_seed = seed;
  std::set<std::string> seen;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    ManifestRecord rec;
    std::string label;
    std::string seed_str;
    if (!std::getline(row, rec.path, '\t') || !std::getline(row, label, '\t') ||
        !std::getline(row, seed_str))
      throw ValidationError(path + ": malformed record on line " + std::to_string(line_no));
    rec.label = parse_label(label);
    rec.seed = std::strtoull(seed_str.c_str(), nullptr, 10);
    if (!seen.insert(rec.path).second)
      throw ValidationError(path + ": duplicate record path '" + rec.path + "'");
    m.records.push_back(std::move(rec));
  }
  return m;
}

DatasetManifest gen_corpus(int n, double positive_fraction, uint64_t seed,
                           const std::string& out_dir) {
  if (n < 8) throw ValidationError("corpus needs at least 8 cases");
  if (!(positive_fraction >= 0.0 && positive_fraction <= 1.0))
    throw ValidationError("positive fraction must lie in [0, 1]");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);

  const int n_pos = static_cast<int>(std::lround(n * positive_fraction));
  std::vector<int> labels(static_cast<size_t>(n), 0);
  std::fill(labels.begin(), labels.begin() + n_pos, 1);
  Rng label_rng(derive_seed(seed, "labels"));
  label_rng.shuffle(labels);

  DatasetManifest m;
  m.corpus_seed = seed;
  m.records.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "case_%04d.png", i);
    m.records[static_cast<size_t>(i)] = {name, labels[static_cast<size_t>(i)],
                                         derive_seed(seed, static_cast<uint64_t>(i))};
  }
  const std::filesystem::path dir(out_dir);
  const int workers = std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
  parallel_for(n, workers, [&](int i) {
    const ManifestRecord& rec = m.records[static_cast<size_t>(i)];
    CaseResult cr = gen_case(make_spec(rec.label, rec.seed));
    img::write_png((dir / rec.path).string(), cr.image);
  });
  write_manifest((dir / "manifest.tsv").string(), m);
  return m;
}

}  // namespace usf::synth
