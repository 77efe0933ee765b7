// Independent scalar re-implementations used as test oracles. These
// deliberately share no code with the library paths they check: plain
// loops, no helper reuse.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <vector>

namespace oracle {

struct FlatMask {
  int h = 0, w = 0;
  std::vector<double> v;
};

struct FlatQuery {
  std::vector<double> p;
  std::vector<FlatMask> mask_long;
  std::vector<FlatMask> mask_short;
};

struct FlatGt {
  std::vector<int> visible;
  std::vector<FlatMask> masks;  // meaningful where visible
};

struct FlatWeights {
  double lambda_cls, lambda_seg, lambda_lsi;
  double epsilon, tau, focal_alpha, focal_gamma, dice_smooth;
};

inline double clampp(double p) {
  if (p < 1e-7) return 1e-7;
  if (p > 1.0 - 1e-7) return 1.0 - 1e-7;
  return p;
}

// Weighted matching cost of one query, written out longhand.
inline double matching_cost(const FlatQuery& q, const FlatGt& gt,
                            const FlatWeights& w, bool use_short) {
  const int T = static_cast<int>(q.p.size());

  double cls = 0.0;
  for (int t = 0; t < T; ++t) {
    double pp = clampp(q.p[t]);
    cls += gt.visible[t] ? -std::log(pp) : -std::log(1.0 - pp);
  }
  cls /= T;

  double lseg = 0.0, sseg = 0.0;
  for (int t = 0; t < T; ++t) {
    if (!gt.visible[t]) continue;
    const FlatMask& g = gt.masks[t];
    for (int branch = 0; branch < (use_short ? 2 : 1); ++branch) {
      const FlatMask& m = branch ? q.mask_short[t] : q.mask_long[t];
      double inter = 0.0, msum = 0.0, gsum = 0.0;
      for (std::size_t i = 0; i < m.v.size(); ++i) {
        inter += m.v[i] * g.v[i];
        msum += m.v[i];
        gsum += g.v[i];
      }
      double dice = 1.0 - (2.0 * inter + w.dice_smooth) /
                              (msum + gsum + w.dice_smooth);
      double focal = 0.0;
      for (std::size_t i = 0; i < m.v.size(); ++i) {
        double p = clampp(m.v[i]);
        if (g.v[i] > 0.5)
          focal += -w.focal_alpha * std::pow(1.0 - p, w.focal_gamma) *
                   std::log(p);
        else
          focal += -(1.0 - w.focal_alpha) * std::pow(p, w.focal_gamma) *
                   std::log(1.0 - p);
      }
      focal /= static_cast<double>(m.v.size());
      (branch ? sseg : lseg) += dice + focal;
    }
  }

  double lsi = 0.0;
  if (use_short) {
    for (int t = 0; t < T; ++t) {
      const FlatMask& ml = q.mask_long[t];
      const FlatMask& ms = q.mask_short[t];
      double inter = 0.0, area = 0.0;
      for (std::size_t i = 0; i < ml.v.size(); ++i) {
        double a = ml.v[i] >= w.tau ? ml.v[i] : 0.0;
        double b = ms.v[i] >= w.tau ? ms.v[i] : 0.0;
        inter += a * b;
        area += a;
      }
      lsi += 1.0 - (inter + w.epsilon) / (area + w.epsilon);
    }
  }

  return w.lambda_cls * cls + w.lambda_seg * lseg + w.lambda_seg * sseg +
         w.lambda_lsi * lsi;
}

inline int select_best(const std::vector<FlatQuery>& queries, const FlatGt& gt,
                       const FlatWeights& w, bool use_short) {
  int best = 0;
  double best_cost = matching_cost(queries[0], gt, w, use_short);
  for (std::size_t i = 1; i < queries.size(); ++i) {
    double c = matching_cost(queries[i], gt, w, use_short);
    if (c < best_cost) {
      best_cost = c;
      best = static_cast<int>(i);
    }
  }
  return best;
}

// Brute-force average precision: explicit TP/FP enumeration per threshold,
// all-point max interpolation evaluated literally at every recall step.
inline double mean_ap(std::vector<double> ious, std::vector<double> confidences) {
  const std::size_t n = ious.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return confidences[a] > confidences[b];
  });

  double ap_sum = 0.0;
  for (int k = 0; k < 10; ++k) {
    const double theta = 0.50 + 0.05 * k;
    std::vector<int> tp(n);
    for (std::size_t r = 0; r < n; ++r) tp[r] = ious[order[r]] >= theta ? 1 : 0;

    std::vector<double> precision(n), recall(n);
    int tp_count = 0;
    const int total_gt = static_cast<int>(n);
    for (std::size_t r = 0; r < n; ++r) {
      tp_count += tp[r];
      precision[r] = static_cast<double>(tp_count) / static_cast<double>(r + 1);
      recall[r] = static_cast<double>(tp_count) / total_gt;
    }

    double ap = 0.0;
    double prev_recall = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      double p_interp = 0.0;
      for (std::size_t s = r; s < n; ++s) p_interp = std::max(p_interp, precision[s]);
      ap += (recall[r] - prev_recall) * p_interp;
      prev_recall = recall[r];
    }
    ap_sum += ap;
  }
  return ap_sum / 10.0;
}

}  // namespace oracle
