#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "losh/grid.hpp"

namespace losh {

// One evaluated sample: binarized predictions against ground truth on the
// annotated frames, plus the mean reference score of the selected query.
struct EvalRecord {
  std::string sample_id;
  std::vector<BinaryMask> predictions;
  std::vector<BinaryMask> ground_truth;
  double confidence = 0.0;
};

struct MetricReport {
  std::vector<std::pair<double, double>> precision_at;  // (K, value)
  double overall_iou = 0.0;
  double mean_iou = 0.0;
  double map = 0.0;
  double j_mean = 0.0;
  double f_mean = 0.0;
};

namespace metricdetail {

struct IoUCounts {
  double intersection = 0.0;
  double union_ = 0.0;

  double iou() const {
    // Empty against empty is a correct prediction of absence.
    return union_ == 0.0 ? 1.0 : intersection / union_;
  }
};

inline IoUCounts frame_counts(const BinaryMask& pred, const BinaryMask& gt) {
  if (!pred.same_shape(gt))
    throw std::invalid_argument("metrics: prediction/gt shape mismatch");
  IoUCounts c;
  for (std::size_t i = 0; i < pred.values().size(); ++i) {
    const bool p = pred.values()[i] != 0;
    const bool g = gt.values()[i] != 0;
    c.intersection += (p && g) ? 1.0 : 0.0;
    c.union_ += (p || g) ? 1.0 : 0.0;
  }
  return c;
}

inline void check_record(const EvalRecord& r) {
  if (r.predictions.empty() || r.predictions.size() != r.ground_truth.size())
    throw std::invalid_argument("metrics: malformed record " + r.sample_id);
}

// Intersections and unions pooled over a sample's annotated frames.
inline IoUCounts sample_counts(const EvalRecord& r) {
  check_record(r);
  IoUCounts total;
  for (std::size_t f = 0; f < r.predictions.size(); ++f) {
    IoUCounts c = frame_counts(r.predictions[f], r.ground_truth[f]);
    total.intersection += c.intersection;
    total.union_ += c.union_;
  }
  return total;
}

// Foreground pixels with at least one 4-neighbor outside the mask; pixels
// on the image border count as boundary.
inline BinaryMask boundary_of(const BinaryMask& m) {
  BinaryMask b(m.height(), m.width(), 0);
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) {
      if (!m(y, x)) continue;
      bool edge = y == 0 || x == 0 || y == m.height() - 1 || x == m.width() - 1;
      if (!edge && (!m(y - 1, x) || !m(y + 1, x) || !m(y, x - 1) ||
                    !m(y, x + 1)))
        edge = true;
      if (edge) b(y, x) = 1;
    }
  return b;
}

inline BinaryMask dilate_disc(const BinaryMask& m, int radius) {
  BinaryMask out(m.height(), m.width(), 0);
  const int r2 = radius * radius;
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) {
      if (!m(y, x)) continue;
      for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) {
          if (dy * dy + dx * dx > r2) continue;
          int ny = y + dy, nx = x + dx;
          if (ny >= 0 && ny < m.height() && nx >= 0 && nx < m.width())
            out(ny, nx) = 1;
        }
    }
  return out;
}

inline double boundary_f_measure(const BinaryMask& pred, const BinaryMask& gt) {
  BinaryMask pb = boundary_of(pred);
  BinaryMask gb = boundary_of(gt);
  double pred_count = 0.0, gt_count = 0.0;
  for (auto v : pb.values()) pred_count += v;
  for (auto v : gb.values()) gt_count += v;
  if (pred_count == 0.0 && gt_count == 0.0) return 1.0;
  if (pred_count == 0.0 || gt_count == 0.0) return 0.0;

  const double diag = std::hypot(pred.height(), pred.width());
  const int radius = std::max(1, static_cast<int>(std::ceil(0.008 * diag)));
  BinaryMask pd = dilate_disc(pb, radius);
  BinaryMask gd = dilate_disc(gb, radius);

  double pred_match = 0.0, gt_match = 0.0;
  for (std::size_t i = 0; i < pb.values().size(); ++i) {
    if (pb.values()[i] && gd.values()[i]) pred_match += 1.0;
    if (gb.values()[i] && pd.values()[i]) gt_match += 1.0;
  }
  const double precision = pred_match / pred_count;
  const double recall = gt_match / gt_count;
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

}  // namespace metricdetail

// Fraction of samples whose pooled IoU exceeds K, for K in 0.5..0.9.
inline std::vector<std::pair<double, double>> precision_at_k(
    const std::vector<EvalRecord>& records) {
  if (records.empty()) throw std::invalid_argument("precision_at_k: no records");
  std::vector<double> ious;
  for (const auto& r : records) ious.push_back(metricdetail::sample_counts(r).iou());
  std::vector<std::pair<double, double>> out;
  for (double k : {0.5, 0.6, 0.7, 0.8, 0.9}) {
    int hits = 0;
    for (double iou : ious)
      if (iou > k) ++hits;
    out.emplace_back(k, static_cast<double>(hits) / ious.size());
  }
  return out;
}

// Overall: intersections and unions pooled over every annotated frame of
// every sample. Mean: per-frame IoUs averaged.
inline std::pair<double, double> overall_and_mean_iou(
    const std::vector<EvalRecord>& records) {
  if (records.empty())
    throw std::invalid_argument("overall_and_mean_iou: no records");
  metricdetail::IoUCounts pooled;
  double iou_sum = 0.0;
  long frames = 0;
  for (const auto& r : records) {
    metricdetail::check_record(r);
    for (std::size_t f = 0; f < r.predictions.size(); ++f) {
      auto c = metricdetail::frame_counts(r.predictions[f], r.ground_truth[f]);
      pooled.intersection += c.intersection;
      pooled.union_ += c.union_;
      iou_sum += c.iou();
      ++frames;
    }
  }
  return {pooled.iou(), iou_sum / frames};
}

// Variant averaging per-sample pooled IoUs instead of per-frame ones.
inline double mean_iou_per_sample(const std::vector<EvalRecord>& records) {
  if (records.empty())
    throw std::invalid_argument("mean_iou_per_sample: no records");
  double sum = 0.0;
  for (const auto& r : records) sum += metricdetail::sample_counts(r).iou();
  return sum / records.size();
}

// Mean average precision over IoU thresholds 0.50:0.05:0.95. Records are
// ranked by confidence (stable in input order on ties); a record is a true
// positive at threshold theta when its pooled sample IoU >= theta. AP uses
// all-point interpolation p(r) = max_{r' >= r} p(r').
inline double mean_ap(const std::vector<EvalRecord>& records) {
  if (records.empty()) throw std::invalid_argument("mean_ap: no records");
  const std::size_t n = records.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return records[a].confidence > records[b].confidence;
  });
  std::vector<double> ious;
  for (const auto& r : records) ious.push_back(metricdetail::sample_counts(r).iou());

  double ap_sum = 0.0;
  for (int k = 0; k < 10; ++k) {
    const double theta = 0.50 + 0.05 * k;
    double ap = 0.0;
    int tp = 0;
    // Precision at each rank, then integrate recall steps against the
    // running max of future precisions (computed right to left).
    std::vector<double> precision(n);
    for (std::size_t r = 0; r < n; ++r) {
      if (ious[order[r]] >= theta) ++tp;
      precision[r] = static_cast<double>(tp) / static_cast<double>(r + 1);
    }
    std::vector<double> interp(n);
    double run = 0.0;
    for (std::size_t r = n; r-- > 0;) {
      run = std::max(run, precision[r]);
      interp[r] = run;
    }
    double prev_recall = 0.0;
    tp = 0;
    for (std::size_t r = 0; r < n; ++r) {
      if (ious[order[r]] >= theta) ++tp;
      double recall = static_cast<double>(tp) / static_cast<double>(n);
      ap += (recall - prev_recall) * interp[r];
      prev_recall = recall;
    }
    ap_sum += ap;
  }
  return ap_sum / 10.0;
}

// Region similarity J (mean per-frame IoU) and contour accuracy F (mean
// per-frame boundary F-measure within a tolerance band).
inline std::pair<double, double> j_and_f(const std::vector<EvalRecord>& records) {
  if (records.empty()) throw std::invalid_argument("j_and_f: no records");
  double j_sum = 0.0, f_sum = 0.0;
  long frames = 0;
  for (const auto& r : records) {
    metricdetail::check_record(r);
    for (std::size_t f = 0; f < r.predictions.size(); ++f) {
      j_sum += metricdetail::frame_counts(r.predictions[f], r.ground_truth[f]).iou();
      f_sum += metricdetail::boundary_f_measure(r.predictions[f],
                                                r.ground_truth[f]);
      ++frames;
    }
  }
  return {j_sum / frames, f_sum / frames};
}

inline MetricReport compute_metrics(const std::vector<EvalRecord>& records) {
  MetricReport report;
  report.precision_at = precision_at_k(records);
  auto [overall, mean] = overall_and_mean_iou(records);
  report.overall_iou = overall;
  report.mean_iou = mean;
  report.map = mean_ap(records);
  auto [j, f] = j_and_f(records);
  report.j_mean = j;
  report.f_mean = f;
  return report;
}

// JSON with fixed six-fractional-digit decimals.
inline std::string to_json(const MetricReport& r) {
  char buf[64];
  auto num = [&buf](double v) {
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  std::string out = "{\n  \"precision_at\": {";
  for (std::size_t i = 0; i < r.precision_at.size(); ++i) {
    std::snprintf(buf, sizeof buf, "\"%.1f\"", r.precision_at[i].first);
    std::string key = buf;
    out += std::string(i ? ", " : "") + key + ": " +
           num(r.precision_at[i].second);
  }
  out += "},\n";
  out += "  \"overall_iou\": " + num(r.overall_iou) + ",\n";
  out += "  \"mean_iou\": " + num(r.mean_iou) + ",\n";
  out += "  \"map\": " + num(r.map) + ",\n";
  out += "  \"j_mean\": " + num(r.j_mean) + ",\n";
  out += "  \"f_mean\": " + num(r.f_mean) + "\n}\n";
  return out;
}

}  // namespace losh
