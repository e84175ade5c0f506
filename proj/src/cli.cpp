#include "usf/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "usf/checkpoint.hpp"
#include "usf/common.hpp"
#include "usf/image_io.hpp"
#include "usf/manifest.hpp"
#include "usf/metrics.hpp"
#include "usf/parallel.hpp"
#include "usf/preprocess.hpp"
#include "usf/report.hpp"
#include "usf/runconfig.hpp"
#include "usf/scorecam.hpp"
#include "usf/train.hpp"
#include "usf/wilcoxon.hpp"

namespace fs = std::filesystem;

namespace usf::cli {

namespace {

std::string default_out_root() {
  const char* env = std::getenv("USFMAE_OUT_ROOT");
  return (env && *env) ? env : "runs";
}

RunConfig default_config() {
  RunConfig cfg;
  cfg.out_root = default_out_root();
  cfg.xai_layer = cfg.model.enc_depth - 1;
  cfg.validate();
  return cfg;
}

// Shared per-command inputs; -1 / empty mean "not given on the command line".
struct Opts {
  std::string config_path;
  std::string out;
  std::string manifest;
  std::string checkpoint;
  int threads = -1;
};

void add_common(CLI::App* sub, Opts& o, bool with_manifest, bool with_checkpoint) {
  sub->add_option("--config", o.config_path, "configuration file");
  sub->add_option("--out", o.out, "output directory");
  sub->add_option("--threads", o.threads, "worker cap (0 = hardware concurrency)");
  if (with_manifest)
    sub->add_option("--manifest", o.manifest, "dataset manifest (tsv)")->required();
  if (with_checkpoint) sub->add_option("--checkpoint", o.checkpoint, "model checkpoint");
}

RunConfig resolve_config(const Opts& o) {
  RunConfig cfg = o.config_path.empty() ? default_config() : load_config(o.config_path);
  if (o.threads >= 0) cfg.threads = o.threads;
  set_worker_cap(cfg.threads);
  return cfg;
}

std::string resolve_out(const Opts& o, const RunConfig& cfg, const char* cmd) {
  if (!o.out.empty()) return o.out;
  return cfg.out_root + "/" + cmd;
}

// Every command leaves its exact inputs next to its outputs.
void write_artifacts(const RunConfig& cfg, const std::string& dir) {
  fs::create_directories(dir);
  eval::write_text_file(dir + "/resolved.ini", render_config(cfg));
  eval::write_text_file(dir + "/version.txt", std::string("usfmae ") + USFMAE_VERSION + "\n");
}

img::GrayImage load_one_image(const fs::path& base, const synth::ManifestRecord& rec,
                              const img::PreprocConfig& pcfg) {
  const std::string full = (base / rec.path).string();
  if (full.size() > 8 && full.compare(full.size() - 8, 8, ".grayf64") == 0)
    return img::read_grayf64(full);
  return img::preprocess_pipeline(img::read_image(full), pcfg).image;
}

// fold_<k>.tsv prediction files found under `dir`, ordered by fold id.
std::vector<std::string> find_prediction_files(const std::string& dir) {
  if (!fs::is_directory(dir))
    throw ValidationError("prediction directory '" + dir + "' does not exist");
  std::map<int, std::string> by_fold;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    int k = -1;
    if (std::sscanf(name.c_str(), "fold_%d.tsv", &k) == 1 &&
        name == "fold_" + std::to_string(k) + ".tsv") {
      by_fold[k] = entry.path().string();
    }
  }
  if (by_fold.empty())
    throw ValidationError("no fold_<k>.tsv prediction files under '" + dir + "'");
  std::vector<std::string> files;
  for (const auto& [k, path] : by_fold) files.push_back(path);
  return files;
}

struct EvaluationBundle {
  std::vector<eval::FoldSummary> summaries;
  std::vector<eval::RocCurve> rocs;
  std::vector<eval::PrCurve> prs;
  std::string table;
};

EvaluationBundle evaluate_predictions(const std::string& in_dir, const RunConfig& cfg) {
  EvaluationBundle b;
  for (const std::string& file : find_prediction_files(in_dir)) {
    const std::vector<train::PredictionRow> rows = train::read_predictions(file);
    std::vector<double> probs;
    std::vector<int> labels;
    for (const train::PredictionRow& r : rows) {
      probs.push_back(r.prob);
      labels.push_back(r.label);
    }
    const eval::ConfusionCounts c = eval::confusion(probs, labels, cfg.threshold);
    eval::FoldSummary s;
    s.accuracy = eval::accuracy(c);
    s.sensitivity = eval::sensitivity(c);
    s.specificity = eval::specificity(c);
    const eval::RocCurve roc = eval::roc_auc(probs, labels);
    s.auc = roc.auc;
    b.summaries.push_back(s);
    b.rocs.push_back(roc);
    b.prs.push_back(eval::pr_curve(probs, labels));
  }
  b.table = eval::render_metrics_table(cfg.model_name, b.summaries,
                                       eval::aggregate_folds(b.summaries));
  return b;
}

stats::PMethod method_from(const std::string& name) {
  if (name == "auto") return stats::PMethod::kAuto;
  if (name == "exact") return stats::PMethod::kExact;
  if (name == "normal") return stats::PMethod::kNormal;
  throw ValidationError("unknown stats method '" + name + "'");
}

stats::PairedSamples read_pairs(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open pairs file '" + path + "'");
  stats::PairedSamples s;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    double x = 0.0, y = 0.0;
    if (std::sscanf(line.c_str(), "%lf\t%lf", &x, &y) != 2 &&
        std::sscanf(line.c_str(), "%lf %lf", &x, &y) != 2)
      throw ValidationError("pairs file '" + path + "' line " + std::to_string(line_no) +
                            ": expected two numbers");
    s.x.push_back(x);
    s.y.push_back(y);
    s.labels.push_back("pair" + std::to_string(line_no));
  }
  return s;
}

// --------------------------------------------------------------------------
// Command bodies
// --------------------------------------------------------------------------

void cmd_synth(const Opts& o, int n, uint64_t seed, double pos_frac, bool n_set, bool seed_set,
               bool pf_set, std::ostream& out) {
  RunConfig cfg = resolve_config(o);
  if (n_set) cfg.synth_n = n;
  if (seed_set) cfg.seed = seed;
  if (pf_set) cfg.synth_positive_fraction = pos_frac;
  cfg.validate();
  const std::string dir = resolve_out(o, cfg, "synth");
  const synth::DatasetManifest man = synth::gen_corpus(
      cfg.synth_n, cfg.synth_positive_fraction, derive_seed(cfg.seed, "synth"), dir);
  write_artifacts(cfg, dir);
  out << "synth: " << man.records.size() << " images (" << man.count(1) << " positive) -> "
      << dir << "\n";
}

void cmd_preprocess(const Opts& o, std::ostream& out) {
  const RunConfig cfg = resolve_config(o);
  const std::string dir = resolve_out(o, cfg, "preprocess");
  fs::create_directories(dir);

  const synth::DatasetManifest man = synth::read_manifest(o.manifest);
  const fs::path base = fs::path(o.manifest).parent_path();
  const int n = static_cast<int>(man.records.size());

  synth::DatasetManifest processed;
  processed.corpus_seed = man.corpus_seed;
  processed.records.resize(n);
  std::vector<char> converged(static_cast<size_t>(n), 0);
  parallel_for(n, worker_cap(), [&](int i) {
    const synth::ManifestRecord& rec = man.records[static_cast<size_t>(i)];
    const img::RgbImage rgb = img::read_image((base / rec.path).string());
    const img::PreprocResult res = img::preprocess_pipeline(rgb, cfg.preproc);
    const std::string name = fs::path(rec.path).stem().string() + ".grayf64";
    img::write_grayf64(dir + "/" + name, res.image);
    converged[static_cast<size_t>(i)] = res.inpaint_converged ? 1 : 0;
    processed.records[static_cast<size_t>(i)] = {name, rec.label, rec.seed};
  });
  synth::write_manifest(dir + "/manifest.tsv", processed);
  write_artifacts(cfg, dir);
  const int ok = static_cast<int>(std::count(converged.begin(), converged.end(), 1));
  out << "preprocess: " << n << " images, inpainting converged on " << ok << " -> " << dir
      << "\n";
}

void cmd_pretrain(const Opts& o, const std::string& resume_path, std::ostream& out) {
  const RunConfig cfg = resolve_config(o);
  const std::string dir = resolve_out(o, cfg, "pretrain");

  train::TrainConfig tcfg = cfg.pretrain;
  tcfg.seed = derive_seed(cfg.seed, "pretrain");
  tcfg.policy = cfg.finetune.policy;  // normalization constants for model inputs
  tcfg.augment = false;

  const train::Dataset data = train::load_dataset(o.manifest, cfg.preproc);
  model::ModelCheckpoint resume;
  const model::ModelCheckpoint* resume_ptr = nullptr;
  if (!resume_path.empty()) {
    resume = model::load_checkpoint(resume_path);
    resume_ptr = &resume;
  }
  const train::PretrainResult res = train::pretrain(data, cfg.model, tcfg, resume_ptr);
  write_artifacts(cfg, dir);
  model::save_checkpoint(dir + "/pretrain.ckpt", res.checkpoint);
  train::write_log(dir + "/pretrain.log", res.log);
  const double last_loss = res.log.empty() ? 0.0 : res.log.back().train_loss;
  out << "pretrain: " << data.size() << " images, " << res.log.size()
      << " epochs, final loss " << last_loss << " -> " << dir << "\n";
}

train::TrainConfig finetune_config(const RunConfig& cfg) {
  train::TrainConfig tcfg = cfg.finetune;
  tcfg.seed = derive_seed(cfg.seed, "crossval");
  return tcfg;
}

const model::ParamMap* load_init_encoder(const std::string& path, model::ModelCheckpoint& hold,
                                         const RunConfig& cfg) {
  if (path.empty()) return nullptr;
  hold = model::load_checkpoint(path);
  if (hold.config.image_size != cfg.model.image_size ||
      hold.config.enc_dim != cfg.model.enc_dim || hold.config.enc_depth != cfg.model.enc_depth)
    throw ValidationError("checkpoint '" + path + "' encoder does not match the configured model");
  return &hold.params;
}

void write_fold_outputs(const std::string& dir, int fold_id, const train::Dataset& data,
                        const train::FoldResult& fold) {
  const std::string stem = dir + "/fold_" + std::to_string(fold_id);
  model::save_checkpoint(stem + ".ckpt", fold.best);
  train::write_log(stem + ".log", fold.log);
  train::write_predictions(stem + ".tsv", fold_id, data, fold);
}

void cmd_finetune(const Opts& o, int fold_id, std::ostream& out) {
  const RunConfig cfg = resolve_config(o);
  const std::string dir = resolve_out(o, cfg, "finetune");

  const train::Dataset data = train::load_dataset(o.manifest, cfg.preproc);
  const train::TrainConfig tcfg = finetune_config(cfg);
  const train::FoldSplit split =
      train::make_folds(data.labels, cfg.folds, derive_seed(tcfg.seed, "folds"));
  model::ModelCheckpoint hold;
  const model::ParamMap* init = load_init_encoder(o.checkpoint, hold, cfg);
  const train::FoldResult fold = train::finetune_fold(fold_id, split, data, cfg.model, tcfg, init);
  write_artifacts(cfg, dir);
  write_fold_outputs(dir, fold_id, data, fold);
  out << "finetune: fold " << fold_id << " best val_acc " << fold.best.meta.val_accuracy
      << " (epoch " << fold.best.meta.epoch << ") -> " << dir << "\n";
}

void cmd_crossval(const Opts& o, std::ostream& out) {
  const RunConfig cfg = resolve_config(o);
  const std::string dir = resolve_out(o, cfg, "crossval");

  const train::Dataset data = train::load_dataset(o.manifest, cfg.preproc);
  const train::TrainConfig tcfg = finetune_config(cfg);
  model::ModelCheckpoint hold;
  const model::ParamMap* init = load_init_encoder(o.checkpoint, hold, cfg);
  const train::CrossvalResult res = train::run_crossval(data, cfg.model, tcfg, cfg.folds, init);
  write_artifacts(cfg, dir);
  for (size_t f = 0; f < res.folds.size(); ++f) {
    write_fold_outputs(dir, static_cast<int>(f), data, res.folds[f]);
    out << "crossval: fold " << f << " best val_acc " << res.folds[f].best.meta.val_accuracy
        << "\n";
  }
  out << "crossval: " << res.folds.size() << " folds -> " << dir << "\n";
}

void cmd_evaluate(const Opts& o, const std::string& in_dir, std::ostream& out) {
  const RunConfig cfg = resolve_config(o);
  const std::string dir = resolve_out(o, cfg, "evaluate");
  const EvaluationBundle b = evaluate_predictions(in_dir, cfg);
  write_artifacts(cfg, dir);
  eval::write_text_file(dir + "/metrics.tsv", b.table);
  eval::write_text_file(dir + "/roc.svg", eval::render_roc_svg(b.rocs));
  eval::write_text_file(dir + "/pr.svg", eval::render_pr_svg(b.prs));
  out << b.table;
}

void cmd_stats(const Opts& o, const std::string& fixture, const std::string& pairs_path,
               const std::string& method_flag, std::ostream& out) {
  const RunConfig cfg = resolve_config(o);
  stats::PairedSamples samples;
  if (!fixture.empty()) {
    if (fixture != "table2")
      throw ValidationError("unknown fixture '" + fixture + "' (available: table2)");
    samples = stats::table2_fixture();
  } else if (!pairs_path.empty()) {
    samples = read_pairs(pairs_path);
  } else {
    throw ValidationError("stats: provide --fixture table2 or --pairs <file>");
  }
  const std::string method = method_flag.empty() ? cfg.stats_method : method_flag;
  const stats::WilcoxonResult r =
      stats::wilcoxon_signed_rank(samples, stats::ZeroPolicy::kDiscard, method_from(method));
  const std::string block = stats::wilcoxon_block(r);
  out << block << "\n";
  if (!o.out.empty()) {
    write_artifacts(cfg, o.out);
    eval::write_text_file(o.out + "/wilcoxon.txt", block + "\n");
  }
}

void cmd_explain(const Opts& o, int index, int layer_flag, int class_flag, std::ostream& out) {
  const RunConfig cfg = resolve_config(o);
  const std::string dir = resolve_out(o, cfg, "explain");
  if (o.checkpoint.empty())
    throw ValidationError("explain: a --checkpoint with a classification head is required");

  const model::ModelCheckpoint ckpt = model::load_checkpoint(o.checkpoint);
  const synth::DatasetManifest man = synth::read_manifest(o.manifest);
  if (index < 0 || index >= static_cast<int>(man.records.size()))
    throw ValidationError("explain: --index " + std::to_string(index) +
                          " outside the manifest (" + std::to_string(man.records.size()) +
                          " records)");
  const synth::ManifestRecord& rec = man.records[static_cast<size_t>(index)];
  const img::GrayImage gray =
      load_one_image(fs::path(o.manifest).parent_path(), rec, cfg.preproc);

  // Flag > config file > final block of the loaded model.
  int layer = ckpt.config.enc_depth - 1;
  if (layer_flag >= 0) layer = layer_flag;
  else if (!o.config_path.empty()) layer = cfg.xai_layer;
  const int target = class_flag >= 0 ? class_flag : cfg.xai_class;
  const nd::Tensor chw =
      train::replicate_normalize(gray, cfg.finetune.policy, ckpt.config.in_channels);
  const xai::CamResult cam = xai::score_cam(ckpt, chw, target, layer, worker_cap());

  write_artifacts(cfg, dir);
  const std::string png = dir + "/cam_" + std::to_string(index) + ".png";
  xai::overlay(xai::normalize01(gray), cam, png);
  out << "explain: record " << index << " (label " << rec.label << ", class " << target
      << ", layer " << layer << ") -> " << png << "\n";
}

void cmd_report(const Opts& o, const std::string& in_dir, std::ostream& out) {
  const RunConfig cfg = resolve_config(o);
  const std::string dir = resolve_out(o, cfg, "report");
  const EvaluationBundle b = evaluate_predictions(in_dir, cfg);

  const stats::WilcoxonResult r = stats::wilcoxon_signed_rank(
      stats::table2_fixture(), stats::ZeroPolicy::kDiscard, method_from(cfg.stats_method));
  const std::string block = stats::wilcoxon_block(r);

  write_artifacts(cfg, dir);
  eval::write_text_file(dir + "/metrics.tsv", b.table);
  eval::write_text_file(dir + "/roc.svg", eval::render_roc_svg(b.rocs));
  eval::write_text_file(dir + "/pr.svg", eval::render_pr_svg(b.prs));
  eval::write_text_file(dir + "/wilcoxon.txt", block + "\n");
  eval::write_text_file(dir + "/report.txt",
                        b.table + "\nbenchmark comparison (baseline vs proposed):\n" + block +
                            "\n");

  // Overlay gallery: copy any activation-map images sitting next to the
  // predictions (produced by `explain`).
  int copied = 0;
  for (const auto& entry : fs::directory_iterator(in_dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("cam_", 0) == 0 && (name.size() > 4)) {
      fs::create_directories(dir + "/gallery");
      fs::copy_file(entry.path(), dir + "/gallery/" + name,
                    fs::copy_options::overwrite_existing);
      ++copied;
    }
  }
  out << b.table << "\n" << block << "\n";
  if (copied > 0) out << "report: copied " << copied << " overlay files -> " << dir << "\n";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"ultrasound masked-autoencoder pipeline", "usfmae"};
  app.require_subcommand(1);

  Opts synth_o, prep_o, pre_o, ft_o, cv_o, ev_o, st_o, ex_o, rp_o;

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  add_common(synth, synth_o, false, false);
  int synth_n = 0;
  uint64_t synth_seed = 0;
  double synth_pf = 0.0;
  CLI::Option* n_opt = synth->add_option("--n", synth_n, "number of images");
  CLI::Option* seed_opt = synth->add_option("--seed", synth_seed, "global seed override");
  CLI::Option* pf_opt = synth->add_option("--positive-fraction", synth_pf, "positive share");

  CLI::App* prep = app.add_subcommand("preprocess", "materialize preprocessed images");
  add_common(prep, prep_o, true, false);

  CLI::App* pre = app.add_subcommand("pretrain", "masked-reconstruction pretraining");
  add_common(pre, pre_o, true, false);
  std::string resume_path;
  pre->add_option("--resume", resume_path, "checkpoint to continue from");

  CLI::App* ft = app.add_subcommand("finetune", "train one cross-validation fold");
  add_common(ft, ft_o, true, true);
  int fold_id = 0;
  ft->add_option("--fold", fold_id, "fold index (0-based)")->required();

  CLI::App* cv = app.add_subcommand("crossval", "stratified k-fold fine-tuning");
  add_common(cv, cv_o, true, true);

  CLI::App* ev = app.add_subcommand("evaluate", "metrics and curves from predictions");
  add_common(ev, ev_o, false, false);
  std::string ev_in;
  ev->add_option("--in", ev_in, "directory with fold_<k>.tsv predictions")->required();

  CLI::App* st = app.add_subcommand("stats", "paired significance test");
  add_common(st, st_o, false, false);
  std::string fixture, pairs_path, method_flag;
  st->add_option("--fixture", fixture, "bundled benchmark (table2)");
  st->add_option("--pairs", pairs_path, "file with x<TAB>y per line");
  st->add_option("--method", method_flag, "auto | exact | normal");

  CLI::App* ex = app.add_subcommand("explain", "class activation map for one image");
  add_common(ex, ex_o, true, true);
  int ex_index = 0, ex_layer = -1, ex_class = -1;
  ex->add_option("--index", ex_index, "manifest record index");
  ex->add_option("--layer", ex_layer, "encoder block (default: config)");
  ex->add_option("--class", ex_class, "target class (default: config)");

  CLI::App* rp = app.add_subcommand("report", "collate metrics, stats, curves, overlays");
  add_common(rp, rp_o, false, false);
  std::string rp_in;
  rp->add_option("--in", rp_in, "directory with predictions and overlays")->required();

  synth->callback([&] {
    cmd_synth(synth_o, synth_n, synth_seed, synth_pf, n_opt->count() > 0, seed_opt->count() > 0,
              pf_opt->count() > 0, out);
  });
  prep->callback([&] { cmd_preprocess(prep_o, out); });
  pre->callback([&] { cmd_pretrain(pre_o, resume_path, out); });
  ft->callback([&] { cmd_finetune(ft_o, fold_id, out); });
  cv->callback([&] { cmd_crossval(cv_o, out); });
  ev->callback([&] { cmd_evaluate(ev_o, ev_in, out); });
  st->callback([&] { cmd_stats(st_o, fixture, pairs_path, method_flag, out); });
  ex->callback([&] { cmd_explain(ex_o, ex_index, ex_layer, ex_class, out); });
  rp->callback([&] { cmd_report(rp_o, rp_in, out); });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
    return 0;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);  // prints help or the usage error
    return code == 0 ? 0 : 1;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const RuntimeFailure& e) {
    err << "failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "failure: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace usf::cli
