#include "usf/runconfig.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <vector>

#include "usf/common.hpp"

namespace usf::cli {

namespace {

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

long long parse_ll(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const long long n = std::strtoll(v.c_str(), &end, 10);
  if (errno != 0 || end == v.c_str() || *end != '\0')
    throw ValidationError("config key '" + key + "': '" + v + "' is not an integer");
  return n;
}

int parse_int(const std::string& key, const std::string& v) {
  return static_cast<int>(parse_ll(key, v));
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const unsigned long long n = std::strtoull(v.c_str(), &end, 10);
  if (errno != 0 || end == v.c_str() || *end != '\0' || v.find('-') != std::string::npos)
    throw ValidationError("config key '" + key + "': '" + v + "' is not an unsigned integer");
  return static_cast<uint64_t>(n);
}

double parse_f(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (errno != 0 || end == v.c_str() || *end != '\0')
    throw ValidationError("config key '" + key + "': '" + v + "' is not a number");
  return x;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ValidationError("config key '" + key + "': '" + v + "' is not a boolean");
}

void parse_triple(const std::string& key, const std::string& v, double out[3]) {
  std::istringstream ss(v);
  std::string part;
  std::vector<double> vals;
  while (std::getline(ss, part, ',')) vals.push_back(parse_f(key, trim(part)));
  if (vals.size() != 3)
    throw ValidationError("config key '" + key + "': expected three comma-separated numbers");
  std::copy(vals.begin(), vals.end(), out);
}

std::string fmt_f(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string fmt_triple(const double v[3]) {
  return fmt_f(v[0]) + "," + fmt_f(v[1]) + "," + fmt_f(v[2]);
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& key_table() {
  static const std::map<std::string, Setter> table = {
      {"global.seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.seed = parse_u64(k, v); }},
      {"global.threads", [](RunConfig& c, const std::string& k, const std::string& v) { c.threads = parse_int(k, v); }},
      {"global.out_root", [](RunConfig& c, const std::string&, const std::string& v) { c.out_root = v; }},
      {"synth.n", [](RunConfig& c, const std::string& k, const std::string& v) { c.synth_n = parse_int(k, v); }},
      {"synth.positive_fraction", [](RunConfig& c, const std::string& k, const std::string& v) { c.synth_positive_fraction = parse_f(k, v); }},
      {"preprocess.margin_top", [](RunConfig& c, const std::string& k, const std::string& v) { c.preproc.margins.top = parse_int(k, v); }},
      {"preprocess.margin_bottom", [](RunConfig& c, const std::string& k, const std::string& v) { c.preproc.margins.bottom = parse_int(k, v); }},
      {"preprocess.margin_left", [](RunConfig& c, const std::string& k, const std::string& v) { c.preproc.margins.left = parse_int(k, v); }},
      {"preprocess.margin_right", [](RunConfig& c, const std::string& k, const std::string& v) { c.preproc.margins.right = parse_int(k, v); }},
      {"preprocess.hue_max", [](RunConfig& c, const std::string& k, const std::string& v) { c.preproc.thresholds.hue_max = parse_int(k, v); }},
      {"preprocess.sat_max", [](RunConfig& c, const std::string& k, const std::string& v) { c.preproc.thresholds.sat_max = parse_int(k, v); }},
      {"preprocess.val_max", [](RunConfig& c, const std::string& k, const std::string& v) { c.preproc.thresholds.val_max = parse_int(k, v); }},
      {"preprocess.inpaint_dt", [](RunConfig& c, const std::string& k, const std::string& v) { c.preproc.inpaint.dt = parse_f(k, v); }},
      {"preprocess.inpaint_k", [](RunConfig& c, const std::string& k, const std::string& v) { c.preproc.inpaint.k = parse_f(k, v); }},
      {"preprocess.inpaint_gs_sweeps", [](RunConfig& c, const std::string& k, const std::string& v) { c.preproc.inpaint.gs_sweeps = parse_int(k, v); }},
      {"preprocess.inpaint_max_outer", [](RunConfig& c, const std::string& k, const std::string& v) { c.preproc.inpaint.max_outer = parse_int(k, v); }},
      {"preprocess.inpaint_tol", [](RunConfig& c, const std::string& k, const std::string& v) { c.preproc.inpaint.tol = parse_f(k, v); }},
      {"preprocess.inpaint_rgb", [](RunConfig& c, const std::string& k, const std::string& v) { c.preproc.inpaint_rgb = parse_bool(k, v); }},
      {"preprocess.target_h", [](RunConfig& c, const std::string& k, const std::string& v) { c.preproc.target_h = parse_int(k, v); }},
      {"preprocess.target_w", [](RunConfig& c, const std::string& k, const std::string& v) { c.preproc.target_w = parse_int(k, v); }},
      {"model.image_size", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.image_size = parse_int(k, v); }},
      {"model.patch_size", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.patch_size = parse_int(k, v); }},
      {"model.enc_dim", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.enc_dim = parse_int(k, v); }},
      {"model.enc_depth", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.enc_depth = parse_int(k, v); }},
      {"model.enc_heads", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.enc_heads = parse_int(k, v); }},
      {"model.dec_dim", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.dec_dim = parse_int(k, v); }},
      {"model.dec_depth", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.dec_depth = parse_int(k, v); }},
      {"model.dec_heads", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.dec_heads = parse_int(k, v); }},
      {"model.mask_ratio", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.mask_ratio = parse_f(k, v); }},
      {"model.in_channels", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.in_channels = parse_int(k, v); }},
      {"model.class_count", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.class_count = parse_int(k, v); }},
      {"model.normalize_targets", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.normalize_targets = parse_bool(k, v); }},
      {"model.use_cls_token", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.use_cls_token = parse_bool(k, v); }},
      {"pretrain.lr", [](RunConfig& c, const std::string& k, const std::string& v) { c.pretrain.lr = parse_f(k, v); }},
      {"pretrain.weight_decay", [](RunConfig& c, const std::string& k, const std::string& v) { c.pretrain.weight_decay = parse_f(k, v); }},
      {"pretrain.epochs", [](RunConfig& c, const std::string& k, const std::string& v) { c.pretrain.epochs = parse_int(k, v); }},
      {"pretrain.batch_size", [](RunConfig& c, const std::string& k, const std::string& v) { c.pretrain.batch_size = parse_int(k, v); }},
      {"pretrain.warmup_fraction", [](RunConfig& c, const std::string& k, const std::string& v) { c.pretrain.warmup_fraction = parse_f(k, v); }},
      {"finetune.lr", [](RunConfig& c, const std::string& k, const std::string& v) { c.finetune.lr = parse_f(k, v); }},
      {"finetune.weight_decay", [](RunConfig& c, const std::string& k, const std::string& v) { c.finetune.weight_decay = parse_f(k, v); }},
      {"finetune.epochs", [](RunConfig& c, const std::string& k, const std::string& v) { c.finetune.epochs = parse_int(k, v); }},
      {"finetune.batch_size", [](RunConfig& c, const std::string& k, const std::string& v) { c.finetune.batch_size = parse_int(k, v); }},
      {"finetune.warmup_fraction", [](RunConfig& c, const std::string& k, const std::string& v) { c.finetune.warmup_fraction = parse_f(k, v); }},
      {"finetune.augment", [](RunConfig& c, const std::string& k, const std::string& v) { c.finetune.augment = parse_bool(k, v); }},
      {"finetune.folds", [](RunConfig& c, const std::string& k, const std::string& v) { c.folds = parse_int(k, v); }},
      {"augment.rotation_lo_deg", [](RunConfig& c, const std::string& k, const std::string& v) { c.finetune.policy.rotation_lo_deg = parse_f(k, v); }},
      {"augment.rotation_hi_deg", [](RunConfig& c, const std::string& k, const std::string& v) { c.finetune.policy.rotation_hi_deg = parse_f(k, v); }},
      {"augment.symmetric_rotation", [](RunConfig& c, const std::string& k, const std::string& v) { c.finetune.policy.symmetric_rotation = parse_bool(k, v); }},
      {"augment.flip_p", [](RunConfig& c, const std::string& k, const std::string& v) { c.finetune.policy.flip_p = parse_f(k, v); }},
      {"augment.zoom_lo", [](RunConfig& c, const std::string& k, const std::string& v) { c.finetune.policy.zoom_lo = parse_f(k, v); }},
      {"augment.zoom_hi", [](RunConfig& c, const std::string& k, const std::string& v) { c.finetune.policy.zoom_hi = parse_f(k, v); }},
      {"augment.mean", [](RunConfig& c, const std::string& k, const std::string& v) { parse_triple(k, v, c.finetune.policy.mean); }},
      {"augment.stdev", [](RunConfig& c, const std::string& k, const std::string& v) { parse_triple(k, v, c.finetune.policy.stdev); }},
      {"eval.threshold", [](RunConfig& c, const std::string& k, const std::string& v) { c.threshold = parse_f(k, v); }},
      {"eval.model_name", [](RunConfig& c, const std::string&, const std::string& v) { c.model_name = v; }},
      {"stats.method", [](RunConfig& c, const std::string&, const std::string& v) { c.stats_method = v; }},
      {"xai.layer", [](RunConfig& c, const std::string& k, const std::string& v) { c.xai_layer = parse_int(k, v); }},
      {"xai.target_class", [](RunConfig& c, const std::string& k, const std::string& v) { c.xai_class = parse_int(k, v); }},
  };
  return table;
}

}  // namespace

void RunConfig::validate() const {
  if (threads < 0) throw ValidationError("config key 'global.threads': must be nonnegative");
  if (synth_n < 1) throw ValidationError("config key 'synth.n': must be at least 1");
  if (!(synth_positive_fraction >= 0.0 && synth_positive_fraction <= 1.0))
    throw ValidationError("config key 'synth.positive_fraction': outside [0,1]");
  if (preproc.target_h < 1 || preproc.target_w < 1)
    throw ValidationError("config key 'preprocess.target_h/target_w': must be positive");
  if (preproc.margins.top < 0 || preproc.margins.bottom < 0 || preproc.margins.left < 0 ||
      preproc.margins.right < 0)
    throw ValidationError("config key 'preprocess.margin_*': must be nonnegative");
  if (preproc.thresholds.hue_max < 0 || preproc.thresholds.hue_max > 179)
    throw ValidationError("config key 'preprocess.hue_max': outside [0,179]");
  if (preproc.thresholds.sat_max < 0 || preproc.thresholds.sat_max > 255 ||
      preproc.thresholds.val_max < 0 || preproc.thresholds.val_max > 255)
    throw ValidationError("config key 'preprocess.sat_max/val_max': outside [0,255]");
  if (!(preproc.inpaint.dt > 0.0) || !(preproc.inpaint.k > 0.0) ||
      preproc.inpaint.gs_sweeps < 1 || preproc.inpaint.max_outer < 1 ||
      !(preproc.inpaint.tol > 0.0))
    throw ValidationError("config key 'preprocess.inpaint_*': solver settings must be positive");
  model.validate();
  pretrain.validate();
  finetune.validate();
  if (folds < 2) throw ValidationError("config key 'finetune.folds': need at least 2");
  if (!(threshold >= 0.0 && threshold <= 1.0))
    throw ValidationError("config key 'eval.threshold': outside [0,1]");
  if (model_name.empty() || model_name.find_first_of(" \t\n") != std::string::npos)
    throw ValidationError("config key 'eval.model_name': must be a single token");
  if (stats_method != "auto" && stats_method != "exact" && stats_method != "normal")
    throw ValidationError("config key 'stats.method': expected auto, exact, or normal");
  if (xai_layer < 0 || xai_layer >= model.enc_depth)
    throw ValidationError("config key 'xai.layer': outside the encoder depth");
  if (xai_class < 0 || xai_class >= model.class_count)
    throw ValidationError("config key 'xai.target_class': outside the class count");
}

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  bool layer_set = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3)
        throw ValidationError("config line " + std::to_string(line_no) +
                              ": malformed section header '" + t + "'");
      section = t.substr(1, t.size() - 2);
      continue;
    }
    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config line " + std::to_string(line_no) +
                            ": expected key=value, got '" + t + "'");
    if (section.empty())
      throw ValidationError("config line " + std::to_string(line_no) +
                            ": key outside any [section]");
    const std::string key = section + "." + trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    const auto it = key_table().find(key);
    if (it == key_table().end())
      throw ValidationError("unknown configuration key '" + key + "'");
    it->second(cfg, key, value);
    if (key == "xai.layer") layer_set = true;
  }
  if (!layer_set || cfg.xai_layer < 0) cfg.xai_layer = cfg.model.enc_depth - 1;
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string render_config(const RunConfig& cfg) {
  std::ostringstream o;
  o << "[global]\n"
    << "seed=" << cfg.seed << "\n"
    << "threads=" << cfg.threads << "\n"
    << "out_root=" << cfg.out_root << "\n\n"
    << "[synth]\n"
    << "n=" << cfg.synth_n << "\n"
    << "positive_fraction=" << fmt_f(cfg.synth_positive_fraction) << "\n\n"
    << "[preprocess]\n"
    << "margin_top=" << cfg.preproc.margins.top << "\n"
    << "margin_bottom=" << cfg.preproc.margins.bottom << "\n"
    << "margin_left=" << cfg.preproc.margins.left << "\n"
    << "margin_right=" << cfg.preproc.margins.right << "\n"
    << "hue_max=" << cfg.preproc.thresholds.hue_max << "\n"
    << "sat_max=" << cfg.preproc.thresholds.sat_max << "\n"
    << "val_max=" << cfg.preproc.thresholds.val_max << "\n"
    << "inpaint_dt=" << fmt_f(cfg.preproc.inpaint.dt) << "\n"
    << "inpaint_k=" << fmt_f(cfg.preproc.inpaint.k) << "\n"
    << "inpaint_gs_sweeps=" << cfg.preproc.inpaint.gs_sweeps << "\n"
    << "inpaint_max_outer=" << cfg.preproc.inpaint.max_outer << "\n"
    << "inpaint_tol=" << fmt_f(cfg.preproc.inpaint.tol) << "\n"
    << "inpaint_rgb=" << (cfg.preproc.inpaint_rgb ? "true" : "false") << "\n"
    << "target_h=" << cfg.preproc.target_h << "\n"
    << "target_w=" << cfg.preproc.target_w << "\n\n"
    << "[model]\n"
    << "image_size=" << cfg.model.image_size << "\n"
    << "patch_size=" << cfg.model.patch_size << "\n"
    << "enc_dim=" << cfg.model.enc_dim << "\n"
    << "enc_depth=" << cfg.model.enc_depth << "\n"
    << "enc_heads=" << cfg.model.enc_heads << "\n"
    << "dec_dim=" << cfg.model.dec_dim << "\n"
    << "dec_depth=" << cfg.model.dec_depth << "\n"
    << "dec_heads=" << cfg.model.dec_heads << "\n"
    << "mask_ratio=" << fmt_f(cfg.model.mask_ratio) << "\n"
    << "in_channels=" << cfg.model.in_channels << "\n"
    << "class_count=" << cfg.model.class_count << "\n"
    << "normalize_targets=" << (cfg.model.normalize_targets ? "true" : "false") << "\n"
    << "use_cls_token=" << (cfg.model.use_cls_token ? "true" : "false") << "\n\n"
    << "[pretrain]\n"
    << "lr=" << fmt_f(cfg.pretrain.lr) << "\n"
    << "weight_decay=" << fmt_f(cfg.pretrain.weight_decay) << "\n"
    << "epochs=" << cfg.pretrain.epochs << "\n"
    << "batch_size=" << cfg.pretrain.batch_size << "\n"
    << "warmup_fraction=" << fmt_f(cfg.pretrain.warmup_fraction) << "\n\n"
    << "[finetune]\n"
    << "lr=" << fmt_f(cfg.finetune.lr) << "\n"
    << "weight_decay=" << fmt_f(cfg.finetune.weight_decay) << "\n"
    << "epochs=" << cfg.finetune.epochs << "\n"
    << "batch_size=" << cfg.finetune.batch_size << "\n"
    << "warmup_fraction=" << fmt_f(cfg.finetune.warmup_fraction) << "\n"
    << "augment=" << (cfg.finetune.augment ? "true" : "false") << "\n"
    << "folds=" << cfg.folds << "\n\n"
    << "[augment]\n"
    << "rotation_lo_deg=" << fmt_f(cfg.finetune.policy.rotation_lo_deg) << "\n"
    << "rotation_hi_deg=" << fmt_f(cfg.finetune.policy.rotation_hi_deg) << "\n"
    << "symmetric_rotation=" << (cfg.finetune.policy.symmetric_rotation ? "true" : "false")
    << "\n"
    << "flip_p=" << fmt_f(cfg.finetune.policy.flip_p) << "\n"
    << "zoom_lo=" << fmt_f(cfg.finetune.policy.zoom_lo) << "\n"
    << "zoom_hi=" << fmt_f(cfg.finetune.policy.zoom_hi) << "\n"
    << "mean=" << fmt_triple(cfg.finetune.policy.mean) << "\n"
    << "stdev=" << fmt_triple(cfg.finetune.policy.stdev) << "\n\n"
    << "[eval]\n"
    << "threshold=" << fmt_f(cfg.threshold) << "\n"
    << "model_name=" << cfg.model_name << "\n\n"
    << "[stats]\n"
    << "method=" << cfg.stats_method << "\n\n"
    << "[xai]\n"
    << "layer=" << cfg.xai_layer << "\n"
    << "target_class=" << cfg.xai_class << "\n";
  return o.str();
}

}  // namespace usf::cli
