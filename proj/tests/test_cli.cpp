#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "usf/cli.hpp"
#include "usf/common.hpp"
#include "usf/runconfig.hpp"

using namespace usf;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct RunCapture {
  int code = 0;
  std::string out;
  std::string err;
};

RunCapture run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  RunCapture r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "usf_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Small-model configuration the end-to-end chain can train in seconds.
const char* kTinyConfig = R"(# desk-scale test setup
[global]
seed = 33

[synth]
n = 12
positive_fraction = 0.5

[preprocess]
target_h = 32
target_w = 32

[model]
image_size = 32
patch_size = 8
enc_dim = 16
enc_depth = 2
enc_heads = 2
dec_dim = 8
dec_depth = 1
dec_heads = 1
in_channels = 1

[pretrain]
epochs = 2
batch_size = 8

[finetune]
epochs = 2
batch_size = 8
folds = 2

[xai]
layer = 1
)";

}  // namespace

TEST_CASE("configuration parsing") {
  SUBCASE("empty text keeps defaults and resolves the xai layer") {
    const cli::RunConfig cfg = cli::parse_config("");
    CHECK(cfg.seed == 17);
    CHECK(cfg.model.image_size == 224);
    CHECK(cfg.folds == 4);
    CHECK(cfg.xai_layer == cfg.model.enc_depth - 1);
    CHECK(cfg.finetune.policy.mean[0] == 0.485);
  }
  SUBCASE("values, comments, and spacing") {
    const cli::RunConfig cfg = cli::parse_config(
        "# comment\n[global]\nseed = 99\n threads =2 \n\n[model]\nenc_depth=3\n"
        "[augment]\nmean = 0.5, 0.25, 0.125\n[finetune]\naugment=false\n");
    CHECK(cfg.seed == 99);
    CHECK(cfg.threads == 2);
    CHECK(cfg.model.enc_depth == 3);
    CHECK(cfg.xai_layer == 2);  // resolved against the parsed depth
    CHECK(cfg.finetune.policy.mean[1] == 0.25);
    CHECK(!cfg.finetune.augment);
  }
  SUBCASE("explicit xai layer wins over the sentinel") {
    const cli::RunConfig cfg = cli::parse_config("[xai]\nlayer=0\n");
    CHECK(cfg.xai_layer == 0);
  }
  SUBCASE("render/parse round trip is byte-stable") {
    const cli::RunConfig cfg = cli::parse_config(kTinyConfig);
    const std::string rendered = cli::render_config(cfg);
    const cli::RunConfig reparsed = cli::parse_config(rendered);
    CHECK(cli::render_config(reparsed) == rendered);
    CHECK(rendered.find("enc_dim=16\n") != std::string::npos);
    CHECK(rendered.find("mean=0.485,0.456,0.406\n") != std::string::npos);
  }
  SUBCASE("unknown keys are named in the rejection") {
    CHECK_THROWS_WITH_AS(cli::parse_config("[global]\nsede=1\n"),
                         doctest::Contains("global.sede"), ValidationError);
    CHECK_THROWS_WITH_AS(cli::parse_config("[nosuch]\nx=1\n"),
                         doctest::Contains("nosuch.x"), ValidationError);
  }
  SUBCASE("malformed lines") {
    CHECK_THROWS_AS(cli::parse_config("[global\nseed=1\n"), ValidationError);
    CHECK_THROWS_AS(cli::parse_config("seed=1\n"), ValidationError);          // no section
    CHECK_THROWS_AS(cli::parse_config("[global]\nseed\n"), ValidationError);  // no '='
    CHECK_THROWS_AS(cli::parse_config("[global]\nseed=abc\n"), ValidationError);
    CHECK_THROWS_AS(cli::parse_config("[global]\nthreads=1.5\n"), ValidationError);
    CHECK_THROWS_AS(cli::parse_config("[finetune]\naugment=maybe\n"), ValidationError);
    CHECK_THROWS_AS(cli::parse_config("[augment]\nmean=0.5,0.25\n"), ValidationError);
  }
  SUBCASE("validation rules") {
    CHECK_THROWS_AS(cli::parse_config("[finetune]\nfolds=1\n"), ValidationError);
    CHECK_THROWS_AS(cli::parse_config("[stats]\nmethod=bogus\n"), ValidationError);
    CHECK_THROWS_AS(cli::parse_config("[xai]\nlayer=7\n"), ValidationError);
    CHECK_THROWS_AS(cli::parse_config("[eval]\nthreshold=1.5\n"), ValidationError);
    CHECK_THROWS_AS(cli::parse_config("[synth]\npositive_fraction=2\n"), ValidationError);
    CHECK_THROWS_AS(cli::parse_config("[eval]\nmodel_name=two words\n"), ValidationError);
  }
  SUBCASE("missing config file") {
    CHECK_THROWS_AS(cli::load_config("/nonexistent_zz/cfg.ini"), ValidationError);
  }
}

TEST_CASE("stats command prints the benchmark block") {
  const RunCapture r = run_cli({"stats", "--fixture", "table2"});
  CHECK(r.code == 0);
  CHECK(r.out.find("W=6.0") != std::string::npos);
  CHECK(r.out.find("n_eff=13") != std::string::npos);
  const size_t p_pos = r.out.find(" p=");
  REQUIRE(p_pos != std::string::npos);
  const double p = std::stod(r.out.substr(p_pos + 3));
  CHECK(p >= 0.005);
  CHECK(p <= 0.0065);

  SUBCASE("unknown fixture and missing inputs fail with exit 1") {
    CHECK(run_cli({"stats", "--fixture", "table9"}).code == 1);
    CHECK(run_cli({"stats"}).code == 1);
  }
  SUBCASE("explicit exact method") {
    const RunCapture e = run_cli({"stats", "--fixture", "table2", "--method", "exact"});
    CHECK(e.code == 0);
    CHECK(e.out.find("method=exact") != std::string::npos);
  }
  SUBCASE("pairs file") {
    const fs::path dir = fresh_dir("pairs");
    const std::string file = (dir / "p.tsv").string();
    std::ofstream(file) << "0\t1\n0\t2\n0\t3\n0\t4\n0\t-5\n";
    const RunCapture e = run_cli({"stats", "--pairs", file});
    CHECK(e.code == 0);
    CHECK(e.out.find("W=5.0") != std::string::npos);
    CHECK(e.out.find("p=0.625") != std::string::npos);
  }
}

TEST_CASE("usage errors and help") {
  CHECK(run_cli({}).code == 1);
  CHECK(run_cli({"frobnicate"}).code == 1);
  CHECK(run_cli({"crossval"}).code == 1);  // missing required --manifest
  const RunCapture help = run_cli({"--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("crossval") != std::string::npos);
  const RunCapture badflag = run_cli({"synth", "--bogus"});
  CHECK(badflag.code == 1);
  CHECK(!badflag.err.empty());
}

TEST_CASE("synth is deterministic and writes run artifacts") {
  const fs::path a = fresh_dir("synth_a");
  const fs::path b = fresh_dir("synth_b");
  const RunCapture ra =
      run_cli({"synth", "--n", "8", "--seed", "1", "--out", a.string()});
  REQUIRE(ra.code == 0);
  CHECK(ra.out.find("8 images") != std::string::npos);
  const RunCapture rb =
      run_cli({"synth", "--n", "8", "--seed", "1", "--out", b.string()});
  REQUIRE(rb.code == 0);

  CHECK(slurp((a / "manifest.tsv").string()) == slurp((b / "manifest.tsv").string()));
  CHECK(fs::exists(a / "resolved.ini"));
  const std::string version = slurp((a / "version.txt").string());
  CHECK(version.rfind("usfmae ", 0) == 0);
  const std::string resolved = slurp((a / "resolved.ini").string());
  CHECK(resolved.find("[global]\nseed=1\n") != std::string::npos);

  // every generated image identical across the two runs
  for (const auto& entry : fs::directory_iterator(a)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind(".png") != std::string::npos)
      CHECK(slurp(entry.path().string()) == slurp((b / name).string()));
  }
}

TEST_CASE("full pipeline chain on a tiny corpus") {
  const fs::path root = fresh_dir("chain");
  const std::string cfg_path = (root / "run.ini").string();
  std::ofstream(cfg_path) << kTinyConfig;

  // synth
  const std::string synth_dir = (root / "synth").string();
  REQUIRE(run_cli({"synth", "--config", cfg_path, "--out", synth_dir}).code == 0);
  const std::string manifest = synth_dir + "/manifest.tsv";
  REQUIRE(fs::exists(manifest));

  // preprocess (materialized float images + rewired manifest)
  const std::string prep_dir = (root / "prep").string();
  REQUIRE(run_cli({"preprocess", "--config", cfg_path, "--manifest", manifest, "--out",
                   prep_dir})
              .code == 0);
  REQUIRE(fs::exists(prep_dir + "/manifest.tsv"));
  int grayf64_count = 0;
  for (const auto& e : fs::directory_iterator(prep_dir))
    grayf64_count += (e.path().extension() == ".grayf64");
  CHECK(grayf64_count == 12);

  // pretrain on the preprocessed manifest
  const std::string pre_dir = (root / "pre").string();
  REQUIRE(run_cli({"pretrain", "--config", cfg_path, "--manifest", prep_dir + "/manifest.tsv",
                   "--out", pre_dir})
              .code == 0);
  REQUIRE(fs::exists(pre_dir + "/pretrain.ckpt"));
  const std::string pre_log = slurp(pre_dir + "/pretrain.log");
  CHECK(pre_log.find("epoch\tlr\ttrain_loss\tval_acc") == 0);

  // crossval seeded from the pretrained encoder
  const std::string cv_dir = (root / "cv").string();
  REQUIRE(run_cli({"crossval", "--config", cfg_path, "--manifest", manifest, "--checkpoint",
                   pre_dir + "/pretrain.ckpt", "--out", cv_dir})
              .code == 0);
  for (int f = 0; f < 2; ++f) {
    CHECK(fs::exists(cv_dir + "/fold_" + std::to_string(f) + ".ckpt"));
    CHECK(fs::exists(cv_dir + "/fold_" + std::to_string(f) + ".tsv"));
    CHECK(fs::exists(cv_dir + "/fold_" + std::to_string(f) + ".log"));
  }

  // single-fold finetune must agree with the crossval fold file
  const std::string ft_dir = (root / "ft").string();
  REQUIRE(run_cli({"finetune", "--config", cfg_path, "--manifest", manifest, "--checkpoint",
                   pre_dir + "/pretrain.ckpt", "--fold", "1", "--out", ft_dir})
              .code == 0);
  CHECK(slurp(ft_dir + "/fold_1.tsv") == slurp(cv_dir + "/fold_1.tsv"));

  // evaluate
  const std::string ev_dir = (root / "eval").string();
  const RunCapture ev =
      run_cli({"evaluate", "--config", cfg_path, "--in", cv_dir, "--out", ev_dir});
  REQUIRE(ev.code == 0);
  CHECK(ev.out.find("#metrics model=usfmae folds=2") != std::string::npos);
  CHECK(fs::exists(ev_dir + "/metrics.tsv"));
  CHECK(fs::exists(ev_dir + "/roc.svg"));
  CHECK(fs::exists(ev_dir + "/pr.svg"));

  // explain one record with the fold checkpoint
  const std::string ex_dir = (root / "explain").string();
  const RunCapture ex = run_cli({"explain", "--config", cfg_path, "--manifest", manifest,
                                 "--checkpoint", cv_dir + "/fold_0.ckpt", "--index", "0",
                                 "--out", ex_dir});
  REQUIRE(ex.code == 0);
  CHECK(fs::exists(ex_dir + "/cam_0.png"));
  CHECK(fs::exists(ex_dir + "/cam_0.png.txt"));

  // report collates everything; gallery picks up the overlay
  fs::copy_file(ex_dir + "/cam_0.png", cv_dir + "/cam_0.png");
  const std::string rp_dir = (root / "report").string();
  const RunCapture rp =
      run_cli({"report", "--config", cfg_path, "--in", cv_dir, "--out", rp_dir});
  REQUIRE(rp.code == 0);
  CHECK(fs::exists(rp_dir + "/report.txt"));
  CHECK(fs::exists(rp_dir + "/wilcoxon.txt"));
  CHECK(fs::exists(rp_dir + "/gallery/cam_0.png"));
  const std::string report_text = slurp(rp_dir + "/report.txt");
  CHECK(report_text.find("#metrics") != std::string::npos);
  CHECK(report_text.find("W=6.0") != std::string::npos);

  // re-running report on unchanged inputs is byte-stable
  const std::string before = slurp(rp_dir + "/metrics.tsv");
  REQUIRE(run_cli({"report", "--config", cfg_path, "--in", cv_dir, "--out", rp_dir}).code == 0);
  CHECK(slurp(rp_dir + "/metrics.tsv") == before);
  CHECK(slurp(rp_dir + "/report.txt") == report_text);

  // crossval rerun into a fresh directory is byte-identical (prediction files)
  const std::string cv2_dir = (root / "cv2").string();
  REQUIRE(run_cli({"crossval", "--config", cfg_path, "--manifest", manifest, "--checkpoint",
                   pre_dir + "/pretrain.ckpt", "--out", cv2_dir})
              .code == 0);
  for (int f = 0; f < 2; ++f) {
    const std::string name = "/fold_" + std::to_string(f) + ".tsv";
    CHECK(slurp(cv2_dir + name) == slurp(cv_dir + name));
  }

  // checkpoint/model mismatch is a validation error (exit 1)
  CHECK(run_cli({"explain", "--manifest", manifest, "--checkpoint", cv_dir + "/fold_0.ckpt",
                 "--index", "99"})
            .code == 1);
  CHECK(run_cli({"crossval", "--config", cfg_path, "--manifest",
                 (root / "missing.tsv").string(), "--out", cv_dir})
            .code == 1);
}
