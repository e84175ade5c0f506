#include "usf/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "usf/common.hpp"

namespace usf::eval {

namespace {

// Plot geometry shared by both charts.
constexpr double kLeft = 64.0, kTop = 24.0, kSize = 480.0;
constexpr double kBottom = kTop + kSize;
const char* kFoldPalette[6] = {"#1f77b4", "#ff7f0e", "#2ca02c",
                               "#d62728", "#9467bd", "#8c564b"};

double px(double x) { return kLeft + kSize * x; }
double py(double y) { return kBottom - kSize * y; }

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

void open_svg(std::ostringstream& out) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"600\" height=\"576\" "
         "viewBox=\"0 0 600 576\">\n"
      << "<rect width=\"600\" height=\"576\" fill=\"white\"/>\n";
}

void axes(std::ostringstream& out, const std::string& x_label, const std::string& y_label) {
  out << "<rect x=\"" << num(kLeft) << "\" y=\"" << num(kTop) << "\" width=\"" << num(kSize)
      << "\" height=\"" << num(kSize) << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = i / 4.0;
    char label[16];
    std::snprintf(label, sizeof label, "%.2f", v);
    out << "<line x1=\"" << num(px(v)) << "\" y1=\"" << num(kBottom) << "\" x2=\"" << num(px(v))
        << "\" y2=\"" << num(kBottom + 6) << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << num(px(v)) << "\" y=\"" << num(kBottom + 22)
        << "\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">" << label
        << "</text>\n";
    out << "<line x1=\"" << num(kLeft - 6) << "\" y1=\"" << num(py(v)) << "\" x2=\""
        << num(kLeft) << "\" y2=\"" << num(py(v)) << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << num(kLeft - 10) << "\" y=\"" << num(py(v) + 4)
        << "\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"end\">" << label
        << "</text>\n";
  }
  out << "<text x=\"" << num(kLeft + kSize / 2) << "\" y=\"" << num(kBottom + 44)
      << "\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\">" << x_label
      << "</text>\n";
  out << "<text x=\"18\" y=\"" << num(kTop + kSize / 2)
      << "\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\" "
         "transform=\"rotate(-90 18 "
      << num(kTop + kSize / 2) << ")\">" << y_label << "</text>\n";
}

void polyline(std::ostringstream& out, const std::vector<std::pair<double, double>>& pts,
              const std::string& stroke, double width, const std::string& dash = "") {
  out << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"" << num(width)
      << "\"";
  if (!dash.empty()) out << " stroke-dasharray=\"" << dash << "\"";
  out << " points=\"";
  for (size_t i = 0; i < pts.size(); ++i) {
    if (i) out << " ";
    out << num(px(pts[i].first)) << "," << num(py(pts[i].second));
  }
  out << "\"/>\n";
}

void legend_entry(std::ostringstream& out, int slot, const std::string& color,
                  const std::string& text, const std::string& dash = "") {
  const double y = kTop + 16.0 + 18.0 * slot;
  out << "<line x1=\"" << num(kLeft + kSize - 130) << "\" y1=\"" << num(y) << "\" x2=\""
      << num(kLeft + kSize - 104) << "\" y2=\"" << num(y) << "\" stroke=\"" << color
      << "\" stroke-width=\"2.5\"";
  if (!dash.empty()) out << " stroke-dasharray=\"" << dash << "\"";
  out << "/>\n<text x=\"" << num(kLeft + kSize - 98) << "\" y=\"" << num(y + 4)
      << "\" font-family=\"sans-serif\" font-size=\"13\">" << text << "</text>\n";
}

// Staircase interpolation: highest TPR among curve vertices at or left of f.
double tpr_at(const RocCurve& curve, double f) {
  double best = 0.0;
  for (const RocPoint& p : curve.points) {
    if (p.fpr <= f && p.tpr > best) best = p.tpr;
  }
  return best;
}

}  // namespace

std::string format_2dp(double v) {
  if (!std::isfinite(v)) throw ValidationError("format_2dp: non-finite value");
  // Squash binary representation noise well below the decimals that matter,
  // then round half-to-even at two decimals (so 0.925 -> 0.92, 0.935 -> 0.94).
  const double r9 = std::round(v * 1e9) / 1e9;
  const double scaled = r9 * 100.0;
  const double fl = std::floor(scaled);
  const double frac = scaled - fl;
  double cents;
  if (std::abs(frac - 0.5) < 1e-7) {
    cents = (std::fmod(fl, 2.0) == 0.0) ? fl : fl + 1.0;
  } else {
    cents = std::floor(scaled + 0.5);
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", cents / 100.0);
  return buf;
}

std::string format_mean_sd(const MetricAggregate& a) {
  return format_2dp(a.mean) + "+/-" + format_2dp(a.sd);
}

std::string render_metrics_table(const std::string& model_name,
                                 const std::vector<FoldSummary>& folds,
                                 const AggregateSummary& aggregate) {
  std::ostringstream out;
  out << "#metrics model=" << model_name << " folds=" << folds.size() << "\n";
  out << "metric";
  for (size_t f = 0; f < folds.size(); ++f) out << "\tfold_" << (f + 1);
  out << "\tmean\tsd\n";

  const auto row = [&](const char* name, double FoldSummary::* field,
                       const MetricAggregate& agg) {
    out << name;
    for (const FoldSummary& f : folds) out << "\t" << format_2dp(f.*field);
    out << "\t" << format_2dp(agg.mean) << "\t" << format_2dp(agg.sd) << "\n";
  };
  row("accuracy", &FoldSummary::accuracy, aggregate.accuracy);
  row("sensitivity", &FoldSummary::sensitivity, aggregate.sensitivity);
  row("specificity", &FoldSummary::specificity, aggregate.specificity);
  row("roc_auc", &FoldSummary::auc, aggregate.auc);
  return out.str();
}

std::string render_roc_svg(const std::vector<RocCurve>& folds) {
  if (folds.empty()) throw ValidationError("render_roc_svg: no curves");
  std::ostringstream out;
  open_svg(out);
  axes(out, "False positive rate", "True positive rate");

  polyline(out, {{0.0, 0.0}, {1.0, 1.0}}, "#888888", 1.5, "6,4");

  for (size_t f = 0; f < folds.size(); ++f) {
    std::vector<std::pair<double, double>> pts;
    for (const RocPoint& p : folds[f].points) pts.push_back({p.fpr, p.tpr});
    polyline(out, pts, kFoldPalette[f % 6], 1.8);
  }

  // Vertical average of the fold staircases over a fixed FPR grid.
  std::vector<std::pair<double, double>> mean_pts;
  for (int i = 0; i <= 100; ++i) {
    const double f = i / 100.0;
    double sum = 0.0;
    for (const RocCurve& c : folds) sum += tpr_at(c, f);
    mean_pts.push_back({f, sum / folds.size()});
  }
  polyline(out, mean_pts, "black", 2.5);

  for (size_t f = 0; f < folds.size(); ++f) {
    char text[48];
    std::snprintf(text, sizeof text, "fold %zu (AUC %.2f)", f + 1, folds[f].auc);
    legend_entry(out, static_cast<int>(f), kFoldPalette[f % 6], text);
  }
  legend_entry(out, static_cast<int>(folds.size()), "black", "mean");
  legend_entry(out, static_cast<int>(folds.size()) + 1, "#888888", "chance", "6,4");

  out << "</svg>\n";
  return out.str();
}

std::string render_pr_svg(const std::vector<PrCurve>& folds) {
  if (folds.empty()) throw ValidationError("render_pr_svg: no curves");
  std::ostringstream out;
  open_svg(out);
  axes(out, "Recall", "Precision");

  // Iso-F1 contours: precision = F*r / (2r - F) wherever it lies in (0, 1].
  for (double level : folds.front().iso_f1_levels) {
    std::vector<std::pair<double, double>> pts;
    const double r_min = level / (2.0 - level);  // where the contour hits precision 1
    for (int i = 0; i <= 80; ++i) {
      const double r = r_min + (1.0 - r_min) * i / 80.0;
      const double p = level * r / (2.0 * r - level);
      pts.push_back({r, p});
    }
    polyline(out, pts, "#cccccc", 1.2);
    char text[24];
    std::snprintf(text, sizeof text, "F1=%.1f", level);
    out << "<text x=\"" << num(px(1.0) - 44) << "\" y=\"" << num(py(pts.back().second) - 5)
        << "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#888888\">" << text
        << "</text>\n";
  }

  for (size_t f = 0; f < folds.size(); ++f) {
    std::vector<std::pair<double, double>> pts;
    for (const PrPoint& p : folds[f].points) pts.push_back({p.recall, p.precision});
    polyline(out, pts, kFoldPalette[f % 6], 1.8);
    char text[48];
    std::snprintf(text, sizeof text, "fold %zu (area %.2f)", f + 1, folds[f].area);
    legend_entry(out, static_cast<int>(f), kFoldPalette[f % 6], text);
  }

  out << "</svg>\n";
  return out.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("write_text_file: cannot open '" + path + "'");
  out << text;
  if (!out) throw ValidationError("write_text_file: write failed for '" + path + "'");
}

}  // namespace usf::eval
