#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "usf/common.hpp"
#include "usf/image_io.hpp"
#include "usf/rng.hpp"
#include "usf/scorecam.hpp"

using namespace usf;
using nd::Tensor;

namespace {

model::ModelConfig tiny_config() {
  model::ModelConfig cfg;
  cfg.image_size = 32;
  cfg.patch_size = 8;
  cfg.enc_dim = 16;
  cfg.enc_depth = 2;
  cfg.enc_heads = 2;
  cfg.dec_dim = 8;
  cfg.dec_depth = 1;
  cfg.dec_heads = 1;
  cfg.in_channels = 1;
  cfg.validate();
  return cfg;
}

model::ModelCheckpoint tiny_checkpoint(uint64_t seed = 7, bool cls_token = false) {
  model::ModelCheckpoint ckpt;
  ckpt.config = tiny_config();
  ckpt.config.use_cls_token = cls_token;
  ckpt.params = model::init_params(ckpt.config, seed, /*with_decoder=*/false,
                                   /*with_head=*/true);
  return ckpt;
}

Tensor random_input(const model::ModelConfig& cfg, uint64_t seed) {
  Tensor chw = Tensor::zeros({cfg.in_channels, cfg.image_size, cfg.image_size});
  Rng rng(seed);
  for (double& v : chw.v) v = rng.normal(0.0, 1.0);
  return chw;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("activation extraction shape, determinism, and bookkeeping") {
  const model::ModelCheckpoint ckpt = tiny_checkpoint();
  const Tensor chw = random_input(ckpt.config, 11);

  const Tensor acts = xai::extract_activations(ckpt, chw, 1);
  REQUIRE(acts.shape == nd::Shape{16, 4, 4});

  SUBCASE("default-sized config yields the 64 x 14 x 14 stack") {
    model::ModelCheckpoint big;
    big.config = model::ModelConfig{};  // 224 / 16 grid, 64-dim encoder
    big.params = model::init_params(big.config, 3, false, false);
    const Tensor stack =
        xai::extract_activations(big, random_input(big.config, 4), big.config.enc_depth - 1);
    CHECK(stack.shape == nd::Shape{64, 14, 14});
  }

  SUBCASE("identical inputs give identical stacks") {
    const Tensor again = xai::extract_activations(ckpt, chw, 1);
    CHECK(acts.v == again.v);
  }

  SUBCASE("channel permutation commutes with summing over channels") {
    const int k_count = acts.dim(0);
    const int cells = acts.dim(1) * acts.dim(2);
    std::vector<double> direct(static_cast<size_t>(cells), 0.0);
    for (int k = 0; k < k_count; ++k)
      for (int i = 0; i < cells; ++i)
        direct[static_cast<size_t>(i)] += acts.v[static_cast<size_t>(k) * cells + i];

    std::vector<int> perm(static_cast<size_t>(k_count));
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(5);
    rng.shuffle(perm);
    std::vector<double> permuted(static_cast<size_t>(cells), 0.0);
    for (int k : perm)
      for (int i = 0; i < cells; ++i)
        permuted[static_cast<size_t>(i)] += acts.v[static_cast<size_t>(k) * cells + i];

    for (int i = 0; i < cells; ++i)
      CHECK(std::abs(direct[static_cast<size_t>(i)] - permuted[static_cast<size_t>(i)]) <=
            1e-10);
  }

  SUBCASE("non-spatial token is dropped") {
    const model::ModelCheckpoint with_cls = tiny_checkpoint(7, true);
    const Tensor stack = xai::extract_activations(with_cls, chw, 0);
    CHECK(stack.shape == nd::Shape{16, 4, 4});  // 16 spatial patches, cls excluded
  }

  SUBCASE("bad layer index rejected") {
    CHECK_THROWS_AS(xai::extract_activations(ckpt, chw, -1), ValidationError);
    CHECK_THROWS_AS(xai::extract_activations(ckpt, chw, 2), ValidationError);
  }

  SUBCASE("wrong input shape rejected") {
    CHECK_THROWS_AS(xai::extract_activations(ckpt, Tensor::zeros({1, 16, 16}), 0),
                    ValidationError);
  }
}

TEST_CASE("channel upsampling and normalization") {
  Tensor acts = Tensor::zeros({2, 2, 2});
  acts.v = {1.0, 1.0, 1.0, 1.0,   // constant channel
            0.0, 2.0, 4.0, 6.0};  // varying channel
  const std::vector<img::GrayImage> ups = xai::upsample_channels(acts, 8);
  REQUIRE(ups.size() == 2);
  CHECK(ups[0].h == 8);
  CHECK(ups[0].w == 8);
  for (double v : ups[0].px) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
  // Bilinear interpolation cannot exceed the source range.
  for (double v : ups[1].px) {
    CHECK(v >= 0.0);
    CHECK(v <= 6.0);
  }

  SUBCASE("normalize01 maps the range onto [0,1] endpoints") {
    const img::GrayImage n = xai::normalize01(ups[1]);
    CHECK(*std::min_element(n.px.begin(), n.px.end()) == 0.0);
    CHECK(*std::max_element(n.px.begin(), n.px.end()) == 1.0);
  }
  SUBCASE("flat planes normalize to all zeros") {
    const img::GrayImage n = xai::normalize01(ups[0]);
    for (double v : n.px) CHECK(v == 0.0);
  }
  SUBCASE("shape rejections") {
    CHECK_THROWS_AS(xai::upsample_channels(Tensor::zeros({2, 2}), 8), ValidationError);
    CHECK_THROWS_AS(xai::upsample_channels(Tensor::zeros({2, 2, 3}), 8), ValidationError);
    CHECK_THROWS_AS(xai::upsample_channels(acts, 0), ValidationError);
  }
}

TEST_CASE("softmax weights") {
  SUBCASE("equal scores give uniform weights") {
    const std::vector<double> w = xai::softmax_weights({0.3, 0.3, 0.3, 0.3}, 0.1);
    for (double v : w) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
  }
  SUBCASE("weights sum to one") {
    Rng rng(2);
    std::vector<double> scores(16);
    for (double& s : scores) s = rng.uniform();
    const std::vector<double> w = xai::softmax_weights(scores, 0.4);
    double sum = 0.0;
    for (double v : w) {
      CHECK(v > 0.0);
      sum += v;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
  SUBCASE("baseline shifts cancel inside the softmax") {
    const std::vector<double> scores = {0.9, 0.1, 0.5};
    const std::vector<double> a = xai::softmax_weights(scores, 0.0);
    const std::vector<double> b = xai::softmax_weights(scores, 0.77);
    for (size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-12);
  }
  SUBCASE("rejections") {
    CHECK_THROWS_AS(xai::softmax_weights({}, 0.0), ValidationError);
    CHECK_THROWS_AS(xai::softmax_weights({std::nan("")}, 0.0), ValidationError);
  }
}

TEST_CASE("cam composition") {
  SUBCASE("hand-computed two-channel case") {
    img::GrayImage a(2, 2), b(2, 2);
    a.px = {4.0, 0.0, 0.0, 0.0};
    b.px = {0.0, 2.0, -8.0, 0.0};
    const xai::CamResult r = xai::compose_cam({a, b}, {0.25, 0.75});
    // weighted sums: {1.0, 1.5, -6.0, 0.0} -> ReLU {1.0, 1.5, 0, 0} -> /1.5
    CHECK(r.raw_lo == 0.0);
    CHECK(r.raw_hi == 1.5);
    CHECK(r.map.v[0] == doctest::Approx(1.0 / 1.5).epsilon(1e-15));
    CHECK(r.map.v[1] == 1.0);
    CHECK(r.map.v[2] == 0.0);
    CHECK(r.map.v[3] == 0.0);
  }
  SUBCASE("all-negative sums collapse to a zero map") {
    img::GrayImage a(1, 2);
    a.px = {-1.0, -2.0};
    const xai::CamResult r = xai::compose_cam({a}, {1.0});
    CHECK(r.map.v == std::vector<double>{0.0, 0.0});
    CHECK(r.raw_hi == r.raw_lo);
  }
  SUBCASE("permutation of channels leaves the map unchanged") {
    Rng rng(9);
    std::vector<img::GrayImage> chans;
    std::vector<double> alpha;
    for (int k = 0; k < 12; ++k) {
      img::GrayImage g(6, 6);
      for (double& v : g.px) v = rng.normal(0.0, 1.0);
      chans.push_back(g);
      alpha.push_back(rng.uniform(0.01, 1.0));
    }
    double sum = 0.0;
    for (double v : alpha) sum += v;
    for (double& v : alpha) v /= sum;

    const xai::CamResult base = xai::compose_cam(chans, alpha);
    std::vector<int> perm(12);
    std::iota(perm.begin(), perm.end(), 0);
    Rng(77).shuffle(perm);
    std::vector<img::GrayImage> pc;
    std::vector<double> pa;
    for (int k : perm) {
      pc.push_back(chans[static_cast<size_t>(k)]);
      pa.push_back(alpha[static_cast<size_t>(k)]);
    }
    const xai::CamResult permuted = xai::compose_cam(pc, pa);
    REQUIRE(base.map.v.size() == permuted.map.v.size());
    for (size_t i = 0; i < base.map.v.size(); ++i)
      CHECK(std::abs(base.map.v[i] - permuted.map.v[i]) <= 1e-10);
  }
  SUBCASE("rejections") {
    CHECK_THROWS_AS(xai::compose_cam({}, {}), ValidationError);
    img::GrayImage a(2, 2), b(3, 3);
    CHECK_THROWS_AS(xai::compose_cam({a, b}, {0.5, 0.5}), ValidationError);
    CHECK_THROWS_AS(xai::compose_cam({a}, {0.5, 0.5}), ValidationError);
  }
}

TEST_CASE("score_cam end-to-end contracts") {
  const model::ModelCheckpoint ckpt = tiny_checkpoint();
  const Tensor chw = random_input(ckpt.config, 21);

  const xai::CamResult cam = xai::score_cam(ckpt, chw, 1, 1);
  REQUIRE(cam.map.shape == nd::Shape{32, 32});
  CHECK(cam.layer_index == 1);
  CHECK(cam.target_class == 1);
  CHECK(cam.forward_passes == 17);  // 16 channels + baseline
  CHECK(static_cast<int>(cam.alpha.size()) == 16);

  double asum = 0.0;
  for (double v : cam.alpha) asum += v;
  CHECK(std::abs(asum - 1.0) <= 1e-12);
  for (double v : cam.map.v) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }

  SUBCASE("worker count does not change the map") {
    const xai::CamResult par = xai::score_cam(ckpt, chw, 1, 1, 4);
    CHECK(par.map.v == cam.map.v);
    CHECK(par.alpha == cam.alpha);
  }
  SUBCASE("deterministic rerun") {
    const xai::CamResult again = xai::score_cam(ckpt, chw, 1, 1);
    CHECK(again.map.v == cam.map.v);
  }
  SUBCASE("rejections") {
    CHECK_THROWS_AS(xai::score_cam(ckpt, chw, 2, 1), ValidationError);
    CHECK_THROWS_AS(xai::score_cam(ckpt, chw, -1, 1), ValidationError);
    CHECK_THROWS_AS(xai::score_cam(ckpt, chw, 1, 5), ValidationError);
  }
  SUBCASE("encoder-only checkpoints cannot drive the classifier") {
    model::ModelCheckpoint enc_only;
    enc_only.config = ckpt.config;
    enc_only.params = model::init_params(enc_only.config, 7, false, false);
    CHECK_NOTHROW(xai::extract_activations(enc_only, chw, 0));
    CHECK_THROWS_AS(xai::score_cam(enc_only, chw, 1, 1), ValidationError);
  }
}

TEST_CASE("overlay rendering and sidecar") {
  const int n = 16;
  img::GrayImage base(n, n);
  Rng rng(3);
  for (double& v : base.px) v = rng.uniform();

  const std::string dir =
      (std::filesystem::temp_directory_path() / "usf_xai_test").string();
  std::filesystem::create_directories(dir);

  SUBCASE("zero cam reproduces the base image exactly after quantization") {
    xai::CamResult cam;
    cam.map = Tensor::zeros({n, n});
    cam.alpha = {1.0};
    const std::string path = dir + "/zero.png";
    xai::overlay(base, cam, path);
    const img::RgbImage back = img::read_image(path);
    REQUIRE(back.h == n);
    REQUIRE(back.w == n);
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c) {
        const auto g = static_cast<uint8_t>(
            std::llround(std::clamp(base.at(r, c), 0.0, 1.0) * 255.0));
        for (int ch = 0; ch < 3; ++ch) CHECK(back.at(r, c, ch) == g);
      }
    }
    CHECK(std::filesystem::exists(path + ".txt"));
  }

  SUBCASE("saturated cam blends by the formula at probe pixels") {
    img::GrayImage probe(1, 3);
    probe.px = {0.0, 0.5, 1.0};
    xai::CamResult cam;
    cam.map = Tensor::zeros({1, 3});
    std::fill(cam.map.v.begin(), cam.map.v.end(), 1.0);
    cam.alpha = {0.25, 0.75};
    cam.layer_index = 1;
    cam.target_class = 1;
    const std::string path = dir + "/sat.png";
    xai::overlay(probe, cam, path);
    const img::RgbImage back = img::read_image(path);
    for (int c = 0; c < 3; ++c) {
      const double g = probe.px[static_cast<size_t>(c)] * 255.0;
      // alpha = 0.5, ramp(1) = (255, 0, 0)
      CHECK(back.at(0, c, 0) == static_cast<uint8_t>(std::llround(0.5 * g + 127.5)));
      CHECK(back.at(0, c, 1) == static_cast<uint8_t>(std::llround(0.5 * g)));
      CHECK(back.at(0, c, 2) == static_cast<uint8_t>(std::llround(0.5 * g)));
    }
    const std::string side = slurp(path + ".txt");
    CHECK(side.find("#scorecam v1\n") == 0);
    CHECK(side.find("layer=1\n") != std::string::npos);
    CHECK(side.find("class=1\n") != std::string::npos);
    CHECK(side.find("alpha_min=0.25\n") != std::string::npos);
    CHECK(side.find("alpha_max=0.75\n") != std::string::npos);
    CHECK(side.find("raw_lo=") != std::string::npos);
    CHECK(side.find("raw_hi=") != std::string::npos);
  }

  SUBCASE("round-trip keeps dimensions") {
    xai::CamResult cam;
    cam.map = Tensor::zeros({n, n});
    for (size_t i = 0; i < cam.map.v.size(); ++i)
      cam.map.v[i] = static_cast<double>(i) / (cam.map.v.size() - 1);
    cam.alpha = {1.0};
    const std::string path = dir + "/ramp.png";
    xai::overlay(base, cam, path);
    const img::RgbImage back = img::read_image(path);
    CHECK(back.h == n);
    CHECK(back.w == n);
  }

  SUBCASE("rejections") {
    xai::CamResult cam;
    cam.map = Tensor::zeros({n, n + 1});
    cam.alpha = {1.0};
    CHECK_THROWS_AS(xai::overlay(base, cam, dir + "/bad.png"), ValidationError);
    cam.map = Tensor::zeros({n, n});
    CHECK_THROWS(xai::overlay(base, cam, "/nonexistent_dir_zz/x.png"));
  }
}
