#include "usf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "usf/common.hpp"

namespace usf::eval {

namespace {

void check_scored_input(const std::vector<double>& probs, const std::vector<int>& labels) {
  if (probs.empty()) throw ValidationError("metrics: empty input");
  if (probs.size() != labels.size()) {
    throw ValidationError("metrics: probs and labels lengths differ");
  }
  for (size_t i = 0; i < probs.size(); ++i) {
    if (!std::isfinite(probs[i])) throw ValidationError("metrics: non-finite score");
    if (labels[i] != 0 && labels[i] != 1) throw ValidationError("metrics: labels must be 0 or 1");
  }
}

// Indices sorted by descending score; scores equal within a group.
std::vector<size_t> descending_order(const std::vector<double>& scores) {
  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace

ConfusionCounts confusion(const std::vector<double>& probs, const std::vector<int>& labels,
                          double threshold) {
  check_scored_input(probs, labels);
  if (!std::isfinite(threshold)) throw ValidationError("confusion: non-finite threshold");
  ConfusionCounts c;
  for (size_t i = 0; i < probs.size(); ++i) {
    const bool predicted = probs[i] >= threshold;
    if (labels[i] == 1) {
      (predicted ? c.tp : c.fn)++;
    } else {
      (predicted ? c.fp : c.tn)++;
    }
  }
  return c;
}

double accuracy(const ConfusionCounts& c) {
  if (c.total() == 0) throw ValidationError("accuracy undefined: no samples");
  return static_cast<double>(c.tp + c.tn) / c.total();
}

double sensitivity(const ConfusionCounts& c) {
  if (c.tp + c.fn == 0) throw ValidationError("sensitivity undefined: no positive samples");
  return static_cast<double>(c.tp) / (c.tp + c.fn);
}

double specificity(const ConfusionCounts& c) {
  if (c.tn + c.fp == 0) throw ValidationError("specificity undefined: no negative samples");
  return static_cast<double>(c.tn) / (c.tn + c.fp);
}

RocCurve roc_auc(const std::vector<double>& probs, const std::vector<int>& labels) {
  check_scored_input(probs, labels);
  const int pos = static_cast<int>(std::count(labels.begin(), labels.end(), 1));
  const int neg = static_cast<int>(labels.size()) - pos;
  if (pos == 0 || neg == 0) throw ValidationError("roc_auc: both classes required");

  const std::vector<size_t> order = descending_order(probs);

  RocCurve curve;
  curve.points.push_back({0.0, 0.0});
  int tp = 0, fp = 0;
  size_t i = 0;
  while (i < order.size()) {
    // One ROC vertex per unique score: everything at or above it is positive.
    const double score = probs[order[i]];
    while (i < order.size() && probs[order[i]] == score) {
      (labels[order[i]] == 1 ? tp : fp)++;
      ++i;
    }
    curve.points.push_back({static_cast<double>(fp) / neg, static_cast<double>(tp) / pos});
  }

  double area = 0.0;
  for (size_t p = 1; p < curve.points.size(); ++p) {
    const RocPoint& a = curve.points[p - 1];
    const RocPoint& b = curve.points[p];
    area += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
  }
  curve.auc = area;
  return curve;
}

PrCurve pr_curve(const std::vector<double>& probs, const std::vector<int>& labels) {
  check_scored_input(probs, labels);
  const int pos = static_cast<int>(std::count(labels.begin(), labels.end(), 1));
  if (pos == 0) throw ValidationError("pr_curve: no positive samples");

  const std::vector<size_t> order = descending_order(probs);

  PrCurve curve;
  int tp = 0, fp = 0;
  size_t i = 0;
  while (i < order.size()) {
    const double score = probs[order[i]];
    while (i < order.size() && probs[order[i]] == score) {
      (labels[order[i]] == 1 ? tp : fp)++;
      ++i;
    }
    const double recall = static_cast<double>(tp) / pos;
    const double precision = static_cast<double>(tp) / (tp + fp);
    if (curve.points.empty()) {
      // Anchor the sweep at zero recall with the first group's precision so
      // the leading trapezoid covers [0, first recall].
      curve.points.push_back({0.0, precision});
    }
    curve.points.push_back({recall, precision});
  }

  double area = 0.0;
  for (size_t p = 1; p < curve.points.size(); ++p) {
    const PrPoint& a = curve.points[p - 1];
    const PrPoint& b = curve.points[p];
    area += (b.recall - a.recall) * (a.precision + b.precision) * 0.5;
  }
  curve.area = area;
  return curve;
}

MetricAggregate mean_sd(const std::vector<double>& values) {
  if (values.size() < 2) throw ValidationError("mean_sd: at least two values required");
  const double n = static_cast<double>(values.size());
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (n - 1.0))};
}

AggregateSummary aggregate_folds(const std::vector<FoldSummary>& folds) {
  if (folds.size() < 2) throw ValidationError("aggregate_folds: at least two folds required");
  std::vector<double> acc, sens, spec, auc;
  for (const FoldSummary& f : folds) {
    acc.push_back(f.accuracy);
    sens.push_back(f.sensitivity);
    spec.push_back(f.specificity);
    auc.push_back(f.auc);
  }
  return {mean_sd(acc), mean_sd(sens), mean_sd(spec), mean_sd(auc)};
}

}  // namespace usf::eval
