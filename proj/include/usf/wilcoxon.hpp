#pragma once

#include <limits>
#include <string>
#include <vector>

namespace usf::stats {

enum class ZeroPolicy { kDiscard };  // classical treatment: zero differences drop out
enum class PMethod { kAuto, kExact, kNormal };

struct PairedSamples {
  std::vector<double> x;  // baseline measurements
  std::vector<double> y;  // proposed-model measurements
  std::vector<std::string> labels;  // optional per-pair names (metric.fold)
};

struct WilcoxonResult {
  double w = 0.0;           // min(sum of positive ranks, sum of negative ranks)
  int n_effective = 0;      // pairs remaining after zero handling
  int zeros_discarded = 0;
  bool had_ties = false;    // tied |differences| received average ranks
  double p_value = 1.0;     // from the selected method
  std::string method;       // "exact" | "normal-approximation"
  // NaN when not computed (n_eff above the enumeration cap).
  double p_exact = std::numeric_limits<double>::quiet_NaN();
  double p_normal = std::numeric_limits<double>::quiet_NaN();
};

// Paired two-sided signed-rank test. Differences are canonicalized to 12
// significant digits before ranking so decimal-valued inputs tie cleanly.
// `exact` fully enumerates the 2^n sign assignments over the realized rank
// vector (n_effective <= 25); `normal` uses the tie-corrected normal
// approximation with a +0.5 continuity correction. kAuto picks normal when
// ties exist and exact otherwise.
WilcoxonResult wilcoxon_signed_rank(const PairedSamples& s,
                                    ZeroPolicy zero_policy = ZeroPolicy::kDiscard,
                                    PMethod method = PMethod::kAuto);

// Bundled benchmark: 16 matched per-fold metric pairs (4 metrics x 4 folds)
// for the baseline/proposed model comparison shipped with this tool.
PairedSamples table2_fixture();

// One-line report block: W=...  n_eff=...  p=...  method=... (both p values
// appended when the exact and normal paths disagree by more than 1e-3).
std::string wilcoxon_block(const WilcoxonResult& r);

}  // namespace usf::stats
