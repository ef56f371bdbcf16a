#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "octaseg/image.hpp"

namespace octaseg {

struct ConfusionCounts {
  uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

// Absent optionals mark metrics whose denominator vanished non-vacuously
// (e.g. recall with an empty ground truth but a nonempty prediction). When
// both masks are empty the comparison is vacuously perfect and the value is 1.
struct OverlapMetrics {
  std::optional<double> dice, acc, rec, pre;
};

struct CalResult {
  double c = 0, a = 0, l = 0, cal = 0;
};

struct MetricConfig {
  double cal_radius = 2.0;
  int srec_tolerance = 0;
};

struct MetricsReport {
  std::string image_id;
  std::optional<double> dice, acc, rec, pre, c, a, l, cal, s_rec;
};

// Per-pixel tally; vessel is the positive class.
ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& gt);

// dice = 2TP/(2TP+FP+FN), acc = (TP+TN)/total, rec = TP/(TP+FN),
// pre = TP/(TP+FP), with the degenerate rule described on OverlapMetrics.
OverlapMetrics overlap_metrics(const ConfusionCounts& counts);

// Connectivity/area/length triple. With #cc = 8-connected component count,
// phi = thinning, delta = disc dilation by the given radius:
//   C = 1 - min(1, |#cc(gt) - #cc(pred)| / |gt|)
//   A = |(delta(pred) n gt) u (pred n delta(gt))| / |pred u gt|
//   L = |(phi(pred) n delta(gt)) u (delta(pred) n phi(gt))| / |phi(pred) u phi(gt)|
// and cal = C*A*L. Empty gt is an error (C's normalizer vanishes); if both
// skeletons are empty, L = 1 vacuously.
CalResult cal_score(const BinaryMask& pred, const BinaryMask& gt,
                    double dilation_radius = 2.0);

// |phi(gt) n delta_tol(phi(pred))| / |phi(gt)|; both masks are thinned.
// Tolerance 0 compares exact pixels. Empty gt skeleton is an error.
double skeleton_recall(const BinaryMask& pred, const BinaryMask& gt,
                       int tolerance_radius = 0);

MetricsReport evaluate_all(const std::string& id, const BinaryMask& pred,
                           const BinaryMask& gt, const MetricConfig& cfg = {});

// Unweighted per-image mean; a field is averaged over the images where it is
// defined and stays undefined if it is defined nowhere.
MetricsReport mean_report(const std::vector<MetricsReport>& reports);

// One JSON object per report; undefined fields serialize as null.
std::string report_to_json(const MetricsReport& report);

// Fixed column order; undefined fields serialize as "nan".
std::string csv_header();
std::string report_to_csv_row(const MetricsReport& report);

}  // namespace octaseg
