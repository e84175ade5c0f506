// Python bindings for the C++ core: statistics, metrics, masking and patch
// arithmetic, the preprocessing chain, the phantom generator, and the full
// command-line pipeline behind a single run() entry point.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "usf/cli.hpp"
#include "usf/common.hpp"
#include "usf/image_io.hpp"
#include "usf/manifest.hpp"
#include "usf/metrics.hpp"
#include "usf/model.hpp"
#include "usf/preprocess.hpp"
#include "usf/report.hpp"
#include "usf/synth.hpp"
#include "usf/tensor.hpp"
#include "usf/wilcoxon.hpp"

namespace py = pybind11;

namespace {

usf::stats::PMethod parse_method(const std::string& name) {
  if (name == "auto") return usf::stats::PMethod::kAuto;
  if (name == "exact") return usf::stats::PMethod::kExact;
  if (name == "normal") return usf::stats::PMethod::kNormal;
  throw usf::ValidationError("method must be one of: auto, exact, normal");
}

py::dict wilcoxon_dict(const usf::stats::WilcoxonResult& r) {
  py::dict d;
  d["w"] = r.w;
  d["n_effective"] = r.n_effective;
  d["zeros_discarded"] = r.zeros_discarded;
  d["had_ties"] = r.had_ties;
  d["p_value"] = r.p_value;
  d["method"] = r.method;
  d["p_exact"] = r.p_exact;
  d["p_normal"] = r.p_normal;
  d["block"] = usf::stats::wilcoxon_block(r);
  return d;
}

usf::nd::Tensor tensor_from_array(const py::array_t<double, py::array::c_style>& a) {
  usf::nd::Tensor t;
  t.shape.reserve(static_cast<size_t>(a.ndim()));
  for (py::ssize_t i = 0; i < a.ndim(); ++i)
    t.shape.push_back(static_cast<int>(a.shape(i)));
  const double* p = a.data();
  t.v.assign(p, p + a.size());
  return t;
}

py::array_t<double> array_from_tensor(const usf::nd::Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
  py::array_t<double> a(shape);
  std::copy(t.v.begin(), t.v.end(), a.mutable_data());
  return a;
}

py::array_t<double> array_from_gray(const usf::img::GrayImage& g) {
  py::array_t<double> a({static_cast<py::ssize_t>(g.h), static_cast<py::ssize_t>(g.w)});
  std::copy(g.px.begin(), g.px.end(), a.mutable_data());
  return a;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Ultrasound masked-autoencoder toolkit (C++ core)";
  m.attr("__version__") = USFMAE_VERSION;

  py::register_exception<usf::ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<usf::RuntimeFailure>(m, "RuntimeFailure", PyExc_RuntimeError);

  m.def(
      "run",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = usf::cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"),
      "Run one pipeline command (synth, preprocess, pretrain, finetune, crossval,\n"
      "evaluate, stats, explain, report) with CLI-style arguments.\n"
      "Returns (exit_code, stdout, stderr).");

  // ---- statistics ---------------------------------------------------------
  m.def(
      "wilcoxon_signed_rank",
      [](const std::vector<double>& x, const std::vector<double>& y, const std::string& method) {
        usf::stats::PairedSamples s;
        s.x = x;
        s.y = y;
        return wilcoxon_dict(usf::stats::wilcoxon_signed_rank(
            s, usf::stats::ZeroPolicy::kDiscard, parse_method(method)));
      },
      py::arg("x"), py::arg("y"), py::arg("method") = "auto",
      "Paired two-sided signed-rank test; returns a dict with w, n_effective,\n"
      "p_value, method, p_exact, p_normal and the rendered report block.");

  m.def(
      "table2_fixture",
      [] {
        const usf::stats::PairedSamples s = usf::stats::table2_fixture();
        py::dict d;
        d["x"] = s.x;
        d["y"] = s.y;
        d["labels"] = s.labels;
        return d;
      },
      "Bundled benchmark pairs: 16 matched per-fold metric values for the\n"
      "baseline/proposed comparison shipped with the tool.");

  // ---- evaluation metrics -------------------------------------------------
  m.def(
      "confusion_metrics",
      [](const std::vector<double>& probs, const std::vector<int>& labels, double threshold) {
        const usf::eval::ConfusionCounts c = usf::eval::confusion(probs, labels, threshold);
        py::dict d;
        d["tp"] = c.tp;
        d["tn"] = c.tn;
        d["fp"] = c.fp;
        d["fn"] = c.fn;
        d["accuracy"] = usf::eval::accuracy(c);
        d["sensitivity"] = usf::eval::sensitivity(c);
        d["specificity"] = usf::eval::specificity(c);
        return d;
      },
      py::arg("probs"), py::arg("labels"), py::arg("threshold") = 0.5,
      "Threshold the positive-class probabilities (boundary counts positive)\n"
      "and return counts plus accuracy/sensitivity/specificity.");

  m.def(
      "roc_auc",
      [](const std::vector<double>& probs, const std::vector<int>& labels) {
        const usf::eval::RocCurve c = usf::eval::roc_auc(probs, labels);
        std::vector<double> fpr, tpr;
        for (const auto& p : c.points) {
          fpr.push_back(p.fpr);
          tpr.push_back(p.tpr);
        }
        py::dict d;
        d["auc"] = c.auc;
        d["fpr"] = fpr;
        d["tpr"] = tpr;
        return d;
      },
      py::arg("probs"), py::arg("labels"),
      "Trapezoidal ROC curve; auc equals the pairwise win rate with half\n"
      "credit for ties.");

  m.def(
      "pr_curve",
      [](const std::vector<double>& probs, const std::vector<int>& labels) {
        const usf::eval::PrCurve c = usf::eval::pr_curve(probs, labels);
        std::vector<double> recall, precision;
        for (const auto& p : c.points) {
          recall.push_back(p.recall);
          precision.push_back(p.precision);
        }
        py::dict d;
        d["area"] = c.area;
        d["recall"] = recall;
        d["precision"] = precision;
        d["iso_f1_levels"] = c.iso_f1_levels;
        return d;
      },
      py::arg("probs"), py::arg("labels"), "Threshold-sweep precision/recall curve.");

  m.def(
      "mean_sd",
      [](const std::vector<double>& values) {
        const usf::eval::MetricAggregate a = usf::eval::mean_sd(values);
        return py::make_tuple(a.mean, a.sd);
      },
      py::arg("values"), "Mean and sample standard deviation (n-1); needs >= 2 values.");

  m.def("format_2dp", &usf::eval::format_2dp, py::arg("value"),
        "Two-decimal presentation with round-half-even on the decimal value.");

  // ---- masking and patch arithmetic --------------------------------------
  m.def(
      "sample_mask",
      [](int n_patches, double mask_ratio, uint64_t seed) {
        const usf::model::MaskSet ms = usf::model::sample_mask(n_patches, mask_ratio, seed);
        return py::make_tuple(ms.visible, ms.masked);
      },
      py::arg("n_patches"), py::arg("mask_ratio"), py::arg("seed"),
      "Seeded uniform patch split; returns (visible, masked) ascending indices.");

  m.def(
      "patchify",
      [](const py::array_t<double, py::array::c_style>& chw, int patch_size) {
        if (chw.ndim() != 3) throw usf::ValidationError("patchify expects a [C,H,W] array");
        return array_from_tensor(usf::model::patchify(tensor_from_array(chw), patch_size));
      },
      py::arg("chw"), py::arg("patch_size"),
      "[C,H,W] -> [N, C*P*P] raster-major patch rows.");

  m.def(
      "unpatchify",
      [](const py::array_t<double, py::array::c_style>& patches, int patch_size, int channels,
         int h, int w) {
        if (patches.ndim() != 2) throw usf::ValidationError("unpatchify expects a [N,D] array");
        return array_from_tensor(
            usf::model::unpatchify(tensor_from_array(patches), patch_size, channels, h, w));
      },
      py::arg("patches"), py::arg("patch_size"), py::arg("channels"), py::arg("h"), py::arg("w"),
      "Exact inverse of patchify.");

  // ---- preprocessing ------------------------------------------------------
  m.def(
      "preprocess_image",
      [](const std::string& path, int target_h, int target_w) {
        usf::img::PreprocConfig cfg;
        cfg.target_h = target_h;
        cfg.target_w = target_w;
        const usf::img::RgbImage rgb = usf::img::read_image(path);
        usf::img::PreprocResult res;
        {
          py::gil_scoped_release release;
          res = usf::img::preprocess_pipeline(rgb, cfg);
        }
        return array_from_gray(res.image);
      },
      py::arg("path"), py::arg("target_h") = 224, py::arg("target_w") = 224,
      "Full preprocessing chain (annotation masking, hole filling, standardize,\n"
      "resize) on one image file; returns the [H,W] float64 result.");

  // ---- phantom corpus -----------------------------------------------------
  m.def(
      "gen_corpus",
      [](int n, double positive_fraction, uint64_t seed, const std::string& out_dir) {
        usf::synth::DatasetManifest man;
        {
          py::gil_scoped_release release;
          man = usf::synth::gen_corpus(n, positive_fraction, seed, out_dir);
        }
        py::list records;
        for (const auto& r : man.records) {
          py::dict d;
          d["path"] = r.path;
          d["label"] = r.label;
          d["seed"] = r.seed;
          records.append(d);
        }
        return records;
      },
      py::arg("n"), py::arg("positive_fraction"), py::arg("seed"), py::arg("out_dir"),
      "Render a seeded phantom corpus plus manifest.tsv into out_dir; returns\n"
      "the manifest records.");
}
