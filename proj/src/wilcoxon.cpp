#include "usf/wilcoxon.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numeric>

#include "usf/common.hpp"

namespace usf::stats {

namespace {

constexpr int kExactCap = 25;  // 2^n enumeration bound

// Round-trips through 12 significant digits so that differences of
// decimal-valued inputs (0.98-0.93 vs 1.00-0.95) tie exactly.
double canonical(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return std::strtod(buf, nullptr);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace

WilcoxonResult wilcoxon_signed_rank(const PairedSamples& s, ZeroPolicy zero_policy,
                                    PMethod method) {
  (void)zero_policy;  // single policy: discard
  if (s.x.size() != s.y.size()) throw ValidationError("wilcoxon: sample lengths differ");
  if (s.x.empty()) throw ValidationError("wilcoxon: empty samples");
  for (size_t i = 0; i < s.x.size(); ++i) {
    if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
      throw ValidationError("wilcoxon: non-finite measurement");
    }
  }

  WilcoxonResult r;
  std::vector<double> diffs;
  for (size_t i = 0; i < s.x.size(); ++i) {
    const double d = canonical(s.y[i] - s.x[i]);
    if (d == 0.0) {
      r.zeros_discarded++;
    } else {
      diffs.push_back(d);
    }
  }
  if (diffs.empty()) throw ValidationError("wilcoxon: all differences are zero");
  const int n = static_cast<int>(diffs.size());
  r.n_effective = n;

  // Average ranks over |d| with ties sharing their rank mean.
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return std::fabs(diffs[a]) < std::fabs(diffs[b]); });

  std::vector<double> rank(n, 0.0);
  double tie_term = 0.0;  // sum of t^3 - t over tie groups
  int i = 0;
  while (i < n) {
    int j = i;
    while (j < n && std::fabs(diffs[order[j]]) == std::fabs(diffs[order[i]])) ++j;
    const int t = j - i;
    const double avg = (i + 1 + j) / 2.0;  // mean of ranks i+1 .. j
    for (int k = i; k < j; ++k) rank[order[k]] = avg;
    if (t > 1) {
      r.had_ties = true;
      tie_term += static_cast<double>(t) * t * t - t;
    }
    i = j;
  }

  double w_pos = 0.0, w_neg = 0.0;
  for (int k = 0; k < n; ++k) (diffs[k] > 0.0 ? w_pos : w_neg) += rank[k];
  r.w = std::min(w_pos, w_neg);

  // Normal approximation with tie correction and continuity correction.
  const double mu = n * (n + 1) / 4.0;
  const double var = n * (n + 1) * (2.0 * n + 1) / 24.0 - tie_term / 48.0;
  const double z = (r.w + 0.5 - mu) / std::sqrt(var);
  r.p_normal = std::min(1.0, 2.0 * normal_cdf(z));

  // Exact two-sided p by counting sign assignments with W+ <= observed W.
  // Doubling the (half-integral) ranks gives an integer subset-sum table.
  r.p_exact = std::nan("");
  if (n <= kExactCap) {
    const int sum2 = n * (n + 1);  // sum of doubled ranks
    std::vector<uint64_t> ways(sum2 + 1, 0);
    ways[0] = 1;
    for (int k = 0; k < n; ++k) {
      const int r2 = static_cast<int>(std::llround(2.0 * rank[k]));
      for (int t = sum2; t >= r2; --t) ways[t] += ways[t - r2];
    }
    const int w2 = static_cast<int>(std::llround(2.0 * r.w));
    uint64_t count = 0;
    for (int t = 0; t <= std::min(w2, sum2); ++t) count += ways[t];
    r.p_exact = std::min(1.0, 2.0 * static_cast<double>(count) / std::ldexp(1.0, n));
  } else if (method == PMethod::kExact) {
    throw ValidationError("wilcoxon: exact enumeration capped at " + std::to_string(kExactCap) +
                          " pairs");
  }

  const bool use_exact = method == PMethod::kExact || (method == PMethod::kAuto && !r.had_ties &&
                                                       n <= kExactCap);
  if (use_exact) {
    r.p_value = r.p_exact;
    r.method = "exact";
  } else {
    r.p_value = r.p_normal;
    r.method = "normal-approximation";
  }
  return r;
}

PairedSamples table2_fixture() {
  PairedSamples s;
  const char* metrics[4] = {"accuracy", "sensitivity", "specificity", "roc_auc"};
  const double baseline[4][4] = {{0.89, 0.93, 0.96, 0.94},
                                 {0.82, 0.91, 1.00, 0.97},
                                 {0.95, 0.95, 0.93, 0.93},
                                 {0.91, 0.93, 0.98, 0.95}};
  const double proposed[4][4] = {{0.96, 0.93, 0.97, 0.97},
                                 {0.91, 0.88, 1.00, 0.97},
                                 {1.00, 0.98, 0.95, 0.98},
                                 {0.97, 0.95, 1.00, 1.00}};
  for (int m = 0; m < 4; ++m) {
    for (int f = 0; f < 4; ++f) {
      s.x.push_back(baseline[m][f]);
      s.y.push_back(proposed[m][f]);
      s.labels.push_back(std::string(metrics[m]) + ".fold" + std::to_string(f + 1));
    }
  }
  return s;
}

std::string wilcoxon_block(const WilcoxonResult& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "W=%.1f  n_eff=%d  p=%.4g  method=%s", r.w, r.n_effective,
                r.p_value, r.method.c_str());
  std::string block = buf;
  if (std::isfinite(r.p_exact) && std::isfinite(r.p_normal) &&
      std::fabs(r.p_exact - r.p_normal) > 1e-3) {
    std::snprintf(buf, sizeof buf, "  p_exact=%.4g  p_normal=%.4g", r.p_exact, r.p_normal);
    block += buf;
  }
  return block;
}

}  // namespace usf::stats
