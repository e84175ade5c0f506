#pragma once

#include <string>
#include <vector>

namespace usf::eval {

struct ConfusionCounts {
  int tp = 0, tn = 0, fp = 0, fn = 0;
  int total() const { return tp + tn + fp + fn; }
};

// Predicted positive iff prob >= threshold (boundary counts positive).
ConfusionCounts confusion(const std::vector<double>& probs, const std::vector<int>& labels,
                          double threshold = 0.5);

double accuracy(const ConfusionCounts& c);     // (TP+TN) / total
double sensitivity(const ConfusionCounts& c);  // TP / (TP+FN)
double specificity(const ConfusionCounts& c);  // TN / (TN+FP)

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // (0,0) ... (1,1), both coordinates non-decreasing
  double auc = 0.0;              // trapezoidal area == P(s+ > s-) + 0.5 P(s+ = s-)
};

RocCurve roc_auc(const std::vector<double>& probs, const std::vector<int>& labels);

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
};

struct PrCurve {
  std::vector<PrPoint> points;  // anchored at recall 0, then one point per threshold
  double area = 0.0;            // threshold-sweep trapezoid (not average precision)
  std::vector<double> iso_f1_levels{0.2, 0.4, 0.6, 0.8};  // contour levels for plotting
};

PrCurve pr_curve(const std::vector<double>& probs, const std::vector<int>& labels);

struct FoldSummary {
  double accuracy = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  double auc = 0.0;
};

struct MetricAggregate {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation (n-1)
};

struct AggregateSummary {
  MetricAggregate accuracy, sensitivity, specificity, auc;
};

MetricAggregate mean_sd(const std::vector<double>& values);          // needs >= 2 values
AggregateSummary aggregate_folds(const std::vector<FoldSummary>&);   // needs >= 2 folds

}  // namespace usf::eval
