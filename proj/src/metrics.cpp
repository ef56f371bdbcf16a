#include "octaseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "octaseg/morphology.hpp"

namespace octaseg {

ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& gt) {
  require_same_dims(pred, gt, "confusion");
  ConfusionCounts c;
  for (size_t i = 0; i < pred.bits.size(); ++i) {
    const bool p = pred.bits[i] != 0, g = gt.bits[i] != 0;
    if (p && g) ++c.tp;
    else if (p && !g) ++c.fp;
    else if (!p && g) ++c.fn;
    else ++c.tn;
  }
  return c;
}

OverlapMetrics overlap_metrics(const ConfusionCounts& c) {
  OverlapMetrics m;
  const uint64_t total = c.tp + c.fp + c.fn + c.tn;
  const uint64_t dice_den = 2 * c.tp + c.fp + c.fn;
  // dice_den = 0 forces both masks empty, which is vacuously a perfect match
  m.dice = dice_den ? 2.0 * double(c.tp) / double(dice_den) : 1.0;
  if (total) m.acc = double(c.tp + c.tn) / double(total);
  const uint64_t gt_count = c.tp + c.fn, pred_count = c.tp + c.fp;
  if (gt_count) m.rec = double(c.tp) / double(gt_count);
  else if (pred_count == 0) m.rec = 1.0;
  if (pred_count) m.pre = double(c.tp) / double(pred_count);
  else if (gt_count == 0) m.pre = 1.0;
  return m;
}

namespace {

size_t count_and(const BinaryMask& a, const BinaryMask& b) {
  size_t n = 0;
  for (size_t i = 0; i < a.bits.size(); ++i) n += a.bits[i] & b.bits[i];
  return n;
}

size_t count_or(const BinaryMask& a, const BinaryMask& b) {
  size_t n = 0;
  for (size_t i = 0; i < a.bits.size(); ++i) n += a.bits[i] | b.bits[i];
  return n;
}

// |(a n b') u (a' n b)| for masks a', b' given alongside a, b
size_t count_cross_union(const BinaryMask& a, const BinaryMask& bd, const BinaryMask& ad,
                         const BinaryMask& b) {
  size_t n = 0;
  for (size_t i = 0; i < a.bits.size(); ++i)
    n += (a.bits[i] & bd.bits[i]) | (ad.bits[i] & b.bits[i]);
  return n;
}

}  // namespace

CalResult cal_score(const BinaryMask& pred, const BinaryMask& gt,
                    double dilation_radius) {
  require_same_dims(pred, gt, "cal_score");
  const size_t gt_count = gt.count_true();
  if (gt_count == 0)
    raise(ErrorCode::EmptyInput, "cal_score requires a nonempty ground truth");

  CalResult r;
  const int cc_gt = connected_components(gt, 8).count;
  const int cc_pred = connected_components(pred, 8).count;
  r.c = 1.0 - std::min(1.0, std::abs(cc_gt - cc_pred) / double(gt_count));

  const BinaryMask pred_d = dilate_disc(pred, dilation_radius);
  const BinaryMask gt_d = dilate_disc(gt, dilation_radius);
  r.a = double(count_cross_union(gt, pred_d, gt_d, pred)) / double(count_or(pred, gt));

  const SkeletonMask pred_s = zhang_suen_thin(pred);
  const SkeletonMask gt_s = zhang_suen_thin(gt);
  const size_t l_den = count_or(pred_s, gt_s);
  r.l = l_den ? double(count_cross_union(pred_s, gt_d, pred_d, gt_s)) / double(l_den)
              : 1.0;

  r.cal = r.c * r.a * r.l;
  return r;
}

double skeleton_recall(const BinaryMask& pred, const BinaryMask& gt,
                       int tolerance_radius) {
  require_same_dims(pred, gt, "skeleton_recall");
  if (tolerance_radius < 0)
    raise(ErrorCode::ConfigInvalid, "skeleton_recall tolerance must be >= 0");
  const SkeletonMask gt_s = zhang_suen_thin(gt);
  const size_t gt_count = gt_s.count_true();
  if (gt_count == 0)
    raise(ErrorCode::EmptyInput, "skeleton_recall requires a nonempty gt skeleton");
  SkeletonMask pred_s = zhang_suen_thin(pred);
  if (tolerance_radius > 0) pred_s = dilate_disc(pred_s, tolerance_radius);
  return double(count_and(gt_s, pred_s)) / double(gt_count);
}

MetricsReport evaluate_all(const std::string& id, const BinaryMask& pred,
                           const BinaryMask& gt, const MetricConfig& cfg) {
  MetricsReport rep;
  rep.image_id = id;
  const OverlapMetrics m = overlap_metrics(confusion(pred, gt));
  rep.dice = m.dice;
  rep.acc = m.acc;
  rep.rec = m.rec;
  rep.pre = m.pre;
  const CalResult cal = cal_score(pred, gt, cfg.cal_radius);
  rep.c = cal.c;
  rep.a = cal.a;
  rep.l = cal.l;
  rep.cal = cal.cal;
  rep.s_rec = skeleton_recall(pred, gt, cfg.srec_tolerance);
  return rep;
}

namespace {

std::optional<double> mean_field(const std::vector<MetricsReport>& reports,
                                 std::optional<double> MetricsReport::* field) {
  double sum = 0;
  size_t n = 0;
  for (const MetricsReport& r : reports)
    if (r.*field) {
      sum += *(r.*field);
      ++n;
    }
  if (!n) return std::nullopt;
  return sum / double(n);
}

void json_field(std::ostringstream& os, const char* name,
                const std::optional<double>& v, bool& first) {
  if (!first) os << ",";
  first = false;
  os << "\"" << name << "\":";
  if (v) os << *v;
  else os << "null";
}

void csv_field(std::ostringstream& os, const std::optional<double>& v) {
  os << ",";
  if (v) os << *v;
  else os << "nan";
}

}  // namespace

MetricsReport mean_report(const std::vector<MetricsReport>& reports) {
  MetricsReport m;
  m.image_id = "mean";
  m.dice = mean_field(reports, &MetricsReport::dice);
  m.acc = mean_field(reports, &MetricsReport::acc);
  m.rec = mean_field(reports, &MetricsReport::rec);
  m.pre = mean_field(reports, &MetricsReport::pre);
  m.c = mean_field(reports, &MetricsReport::c);
  m.a = mean_field(reports, &MetricsReport::a);
  m.l = mean_field(reports, &MetricsReport::l);
  m.cal = mean_field(reports, &MetricsReport::cal);
  m.s_rec = mean_field(reports, &MetricsReport::s_rec);
  return m;
}

std::string report_to_json(const MetricsReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << "{\"id\":\"";
  for (char ch : r.image_id) {
    if (ch == '"' || ch == '\\') os << '\\';
    os << ch;
  }
  os << "\",";
  bool first = true;
  json_field(os, "dice", r.dice, first);
  json_field(os, "acc", r.acc, first);
  json_field(os, "rec", r.rec, first);
  json_field(os, "pre", r.pre, first);
  json_field(os, "c", r.c, first);
  json_field(os, "a", r.a, first);
  json_field(os, "l", r.l, first);
  json_field(os, "cal", r.cal, first);
  json_field(os, "s_rec", r.s_rec, first);
  os << "}";
  return os.str();
}

std::string csv_header() { return "id,dice,acc,rec,pre,c,a,l,cal,s_rec"; }

std::string report_to_csv_row(const MetricsReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << r.image_id;
  csv_field(os, r.dice);
  csv_field(os, r.acc);
  csv_field(os, r.rec);
  csv_field(os, r.pre);
  csv_field(os, r.c);
  csv_field(os, r.a);
  csv_field(os, r.l);
  csv_field(os, r.cal);
  csv_field(os, r.s_rec);
  return os.str();
}

}  // namespace octaseg
