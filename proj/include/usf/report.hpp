#pragma once

#include <string>
#include <vector>

#include "usf/metrics.hpp"

namespace usf::eval {

// Two-decimal presentation with round-half-even on the decimal value
// (binary representation noise is squashed first, so 0.925 -> "0.92").
std::string format_2dp(double v);
std::string format_mean_sd(const MetricAggregate& a);  // e.g. "0.96+/-0.02"

// Tab-separated per-fold metric table with a mean/sd tail column pair.
std::string render_metrics_table(const std::string& model_name,
                                 const std::vector<FoldSummary>& folds,
                                 const AggregateSummary& aggregate);

// Standalone SVG documents. The ROC plot shows per-fold curves, a vertical
// mean curve, and the chance diagonal; the PR plot shows per-fold curves
// over iso-F1 contour lines.
std::string render_roc_svg(const std::vector<RocCurve>& folds);
std::string render_pr_svg(const std::vector<PrCurve>& folds);

void write_text_file(const std::string& path, const std::string& text);

}  // namespace usf::eval
