#include "usf/checkpoint.hpp"

#include <bit>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace usf::model {

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'U', 'S', 'F', 'M', 'A', 'E', '1', '\0'};

std::string config_blob(const ModelCheckpoint& c) {
  // std::map keeps the keys sorted, so the blob (and thus the file bytes)
  // depend only on the values.
  std::map<std::string, std::string> kv;
  char buf[64];
  auto put_int = [&](const char* k, long long v) { kv[k] = std::to_string(v); };
  put_int("version", c.version);
  put_int("image_size", c.config.image_size);
  put_int("patch_size", c.config.patch_size);
  put_int("enc_dim", c.config.enc_dim);
  put_int("enc_depth", c.config.enc_depth);
  put_int("enc_heads", c.config.enc_heads);
  put_int("dec_dim", c.config.dec_dim);
  put_int("dec_depth", c.config.dec_depth);
  put_int("dec_heads", c.config.dec_heads);
  put_int("in_channels", c.config.in_channels);
  put_int("class_count", c.config.class_count);
  put_int("normalize_targets", c.config.normalize_targets ? 1 : 0);
  put_int("use_cls_token", c.config.use_cls_token ? 1 : 0);
  std::snprintf(buf, sizeof(buf), "%.17g", c.config.mask_ratio);
  kv["mask_ratio"] = buf;
  put_int("meta.epoch", c.meta.epoch);
  put_int("meta.fold", c.meta.fold);
  std::snprintf(buf, sizeof(buf), "%.17g", c.meta.val_accuracy);
  kv["meta.val_accuracy"] = buf;
  std::snprintf(buf, sizeof(buf), "%" PRIu64, c.meta.seed);
  kv["meta.seed"] = buf;
  std::string blob;
  for (const auto& [k, v] : kv) blob += k + "=" + v + "\n";
  return blob;
}

void parse_blob(const std::string& blob, ModelCheckpoint& c) {
  std::istringstream in(blob);
  std::string line;
  std::map<std::string, std::string> kv;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError("malformed checkpoint config line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto want = [&](const char* k) -> const std::string& {
    auto it = kv.find(k);
    if (it == kv.end())
      throw ValidationError(std::string("checkpoint config misses key '") + k + "'");
    return it->second;
  };
  c.version = std::stoi(want("version"));
  if (c.version != 1)
    throw ValidationError("checkpoint version mismatch: expected 1, found " +
                          std::to_string(c.version));
  c.config.image_size = std::stoi(want("image_size"));
  c.config.patch_size = std::stoi(want("patch_size"));
  c.config.enc_dim = std::stoi(want("enc_dim"));
  c.config.enc_depth = std::stoi(want("enc_depth"));
  c.config.enc_heads = std::stoi(want("enc_heads"));
  c.config.dec_dim = std::stoi(want("dec_dim"));
  c.config.dec_depth = std::stoi(want("dec_depth"));
  c.config.dec_heads = std::stoi(want("dec_heads"));
  c.config.in_channels = std::stoi(want("in_channels"));
  c.config.class_count = std::stoi(want("class_count"));
  c.config.normalize_targets = std::stoi(want("normalize_targets")) != 0;
  c.config.use_cls_token = std::stoi(want("use_cls_token")) != 0;
  c.config.mask_ratio = std::stod(want("mask_ratio"));
  c.meta.epoch = std::stoi(want("meta.epoch"));
  c.meta.fold = std::stoi(want("meta.fold"));
  c.meta.val_accuracy = std::stod(want("meta.val_accuracy"));
  c.meta.seed = std::strtoull(want("meta.seed").c_str(), nullptr, 10);
}

void put_u32(std::ostream& out, uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}

uint32_t take_u32(std::istream& in, const std::string& path) {
  uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), 4))
    throw ValidationError(path + ": truncated checkpoint");
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelCheckpoint& ckpt) {
  ckpt.config.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out.good()) throw ValidationError(path + ": cannot open for writing");
  out.write(kMagic, 8);
  const std::string blob = config_blob(ckpt);
  put_u32(out, static_cast<uint32_t>(blob.size()));
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  put_u32(out, static_cast<uint32_t>(ckpt.params.size()));
  for (const auto& [name, t] : ckpt.params) {  // std::map: sorted, stable bytes
    put_u32(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, static_cast<uint32_t>(t.rank()));
    for (int d = 0; d < t.rank(); ++d) put_u32(out, static_cast<uint32_t>(t.dim(d)));
    std::vector<float> data(t.v.size());
    for (size_t i = 0; i < t.v.size(); ++i) data[i] = static_cast<float>(t.v[i]);
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * 4));
  }
  if (!out.good()) throw ValidationError(path + ": write failed");
}

ModelCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) throw ValidationError(path + ": cannot open checkpoint");
  char magic[8] = {};
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw ValidationError(path + ": checkpoint version mismatch (bad magic)");
  const uint32_t blob_len = take_u32(in, path);
  if (blob_len > (1u << 20)) throw ValidationError(path + ": unreasonable config size");
  std::string blob(blob_len, '\0');
  if (!in.read(blob.data(), blob_len)) throw ValidationError(path + ": truncated checkpoint");
  ModelCheckpoint ckpt;
  parse_blob(blob, ckpt);
  ckpt.config.validate();

  std::map<std::string, nd::Shape> known;
  for (const auto& [name, shape] : param_specs(ckpt.config, true, true)) known[name] = shape;

  const uint32_t n_params = take_u32(in, path);
  for (uint32_t i = 0; i < n_params; ++i) {
    const uint32_t name_len = take_u32(in, path);
    if (name_len > 4096) throw ValidationError(path + ": unreasonable parameter name");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw ValidationError(path + ": truncated checkpoint");
    const uint32_t rank = take_u32(in, path);
    if (rank > 8) throw ValidationError(path + ": unreasonable parameter rank");
    nd::Shape shape(rank);
    for (uint32_t d = 0; d < rank; ++d)
      shape[d] = static_cast<int>(take_u32(in, path));
    auto it = known.find(name);
    if (it == known.end())
      throw ValidationError(path + ": unknown parameter '" + name + "' for this config");
    if (it->second != shape)
      throw ValidationError(path + ": parameter shape mismatch for '" + name + "': stored " +
                            nd::shape_str(shape) + ", config requires " +
                            nd::shape_str(it->second));
    nd::Tensor t = nd::Tensor::zeros(shape);
    std::vector<float> data(t.v.size());
    if (!in.read(reinterpret_cast<char*>(data.data()),
                 static_cast<std::streamsize>(data.size() * 4)))
      throw ValidationError(path + ": truncated checkpoint");
    for (size_t j = 0; j < data.size(); ++j) t.v[j] = static_cast<double>(data[j]);
    if (!ckpt.params.emplace(name, std::move(t)).second)
      throw ValidationError(path + ": duplicate parameter '" + name + "'");
  }
  return ckpt;
}

}  // namespace usf::model
