#pragma once

#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "losh/losses.hpp"

namespace losh {

// Per-query instance-sequence prediction: one reference score and one mask
// per expression per frame. The short masks may be absent when the model
// runs single-expression.
struct QuerySequencePrediction {
  int query_index = 0;
  std::vector<double> p;
  std::vector<ProbMask> mask_long;
  std::vector<ProbMask> mask_short;

  int frame_count() const { return static_cast<int>(p.size()); }
};

// Target instance sequence. A frame's mask exists exactly where the
// visibility flag is set.
struct GroundTruthSequence {
  std::vector<std::uint8_t> visible;
  std::vector<std::optional<BinaryMask>> masks;

  int frame_count() const { return static_cast<int>(visible.size()); }

  void validate() const {
    if (visible.size() != masks.size())
      throw std::invalid_argument("GroundTruthSequence: length mismatch");
    for (std::size_t t = 0; t < visible.size(); ++t)
      if (static_cast<bool>(visible[t]) != masks[t].has_value())
        throw std::invalid_argument(
            "GroundTruthSequence: mask presence must follow visibility");
  }
};

struct CostBreakdown {
  int query = -1;
  double cls = 0.0;
  double lseg = 0.0;
  double sseg = 0.0;
  double lsi = 0.0;
  double total = 0.0;
};

struct MatchResult {
  int selected_index = -1;
  std::vector<CostBreakdown> costs;
};

// Matching cost of one query against the ground truth:
//   lambda_cls*cls + lambda_seg*lseg + lambda_seg*sseg + lambda_lsi*lsi
// Mask terms run over visible frames only; the intersection term needs no
// ground truth and runs over every frame. With use_short off the short
// branch terms drop entirely.
inline CostBreakdown matching_cost(const QuerySequencePrediction& y,
                                   const GroundTruthSequence& gt,
                                   const LossWeights& w = {},
                                   bool use_short = true) {
  w.validate();
  gt.validate();
  const int frames = y.frame_count();
  if (frames == 0 || gt.frame_count() != frames ||
      static_cast<int>(y.mask_long.size()) != frames)
    throw std::invalid_argument("matching_cost: inconsistent frame counts");
  if (use_short && static_cast<int>(y.mask_short.size()) != frames)
    throw std::invalid_argument("matching_cost: short masks missing");

  CostBreakdown out;
  out.query = y.query_index;
  out.cls = cls_loss(y.p, gt.visible).loss;

  for (int t = 0; t < frames; ++t) {
    if (!gt.visible[t]) continue;
    const BinaryMask& g = *gt.masks[t];
    out.lseg += dice_loss(y.mask_long[t], g, w.dice_smooth).loss +
                focal_loss(y.mask_long[t], g, w.focal_alpha, w.focal_gamma).loss;
    if (use_short)
      out.sseg += dice_loss(y.mask_short[t], g, w.dice_smooth).loss +
                  focal_loss(y.mask_short[t], g, w.focal_alpha, w.focal_gamma).loss;
  }
  if (use_short) out.lsi = lsi_loss(y.mask_long, y.mask_short, w).loss;

  out.total = w.lambda_cls * out.cls + w.lambda_seg * out.lseg +
              w.lambda_seg * out.sseg + w.lambda_lsi * out.lsi;
  return out;
}

// Best-matched query: argmin of the matching cost, ties to the lowest
// query index.
inline MatchResult select_best(const std::vector<QuerySequencePrediction>& y_all,
                               const GroundTruthSequence& gt,
                               const LossWeights& w = {},
                               bool use_short = true) {
  if (y_all.empty()) throw std::invalid_argument("select_best: no queries");
  MatchResult result;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < y_all.size(); ++i) {
    CostBreakdown cb = matching_cost(y_all[i], gt, w, use_short);
    if (cb.total < best) {
      best = cb.total;
      result.selected_index = static_cast<int>(i);
    }
    result.costs.push_back(cb);
  }
  return result;
}

// The training loss for the selected query, plus the gradients it routes
// back into that query's outputs. Non-selected queries receive nothing.
struct FinalLossResult {
  double total = 0.0;
  CostBreakdown breakdown;
  double fbc_sum = 0.0;

  std::vector<double> grad_p;
  std::vector<ProbMask> grad_mask_long;
  std::vector<ProbMask> grad_mask_short;
  // Scale for externally computed consistency feature-gradients.
  double fbc_grad_scale = 0.0;
};

inline FinalLossResult final_loss(const QuerySequencePrediction& y_star,
                                  const GroundTruthSequence& gt,
                                  const std::vector<double>& fbc_terms,
                                  const LossWeights& w = {},
                                  bool use_short = true) {
  FinalLossResult out;
  out.breakdown = matching_cost(y_star, gt, w, use_short);

  const int frames = y_star.frame_count();
  out.grad_p.assign(frames, 0.0);
  for (int t = 0; t < frames; ++t) {
    out.grad_mask_long.emplace_back(y_star.mask_long[t].height(),
                                    y_star.mask_long[t].width(), 0.0);
    if (use_short)
      out.grad_mask_short.emplace_back(y_star.mask_short[t].height(),
                                       y_star.mask_short[t].width(), 0.0);
  }

  ClsResult cls = cls_loss(y_star.p, gt.visible);
  for (int t = 0; t < frames; ++t)
    out.grad_p[t] = w.lambda_cls * cls.grad[t];

  for (int t = 0; t < frames; ++t) {
    if (!gt.visible[t]) continue;
    const BinaryMask& g = *gt.masks[t];
    MaskLossResult dl = dice_loss(y_star.mask_long[t], g, w.dice_smooth);
    MaskLossResult fl =
        focal_loss(y_star.mask_long[t], g, w.focal_alpha, w.focal_gamma);
    for (std::size_t i = 0; i < dl.grad.size(); ++i)
      out.grad_mask_long[t].values()[i] +=
          w.lambda_seg * (dl.grad.values()[i] + fl.grad.values()[i]);
    if (use_short) {
      MaskLossResult ds = dice_loss(y_star.mask_short[t], g, w.dice_smooth);
      MaskLossResult fs =
          focal_loss(y_star.mask_short[t], g, w.focal_alpha, w.focal_gamma);
      for (std::size_t i = 0; i < ds.grad.size(); ++i)
        out.grad_mask_short[t].values()[i] +=
            w.lambda_seg * (ds.grad.values()[i] + fs.grad.values()[i]);
    }
  }

  if (use_short) {
    LsiResult lsi = lsi_loss(y_star.mask_long, y_star.mask_short, w);
    for (int t = 0; t < frames; ++t) {
      for (std::size_t i = 0; i < lsi.grad_long[t].size(); ++i) {
        out.grad_mask_long[t].values()[i] +=
            w.lambda_lsi * lsi.grad_long[t].values()[i];
        out.grad_mask_short[t].values()[i] +=
            w.lambda_lsi * lsi.grad_short[t].values()[i];
      }
    }
  }

  for (double f : fbc_terms) out.fbc_sum += f;
  out.fbc_grad_scale = w.lambda_fbc;
  out.total = out.breakdown.total + w.lambda_fbc * out.fbc_sum;
  return out;
}

// Inference-time selection: the query with the highest mean reference
// score, ties to the lowest index. Long-expression masks only.
inline std::pair<int, std::vector<ProbMask>> select_inference(
    const std::vector<QuerySequencePrediction>& y_all) {
  if (y_all.empty()) throw std::invalid_argument("select_inference: no queries");
  int best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < y_all.size(); ++i) {
    if (y_all[i].p.empty())
      throw std::invalid_argument("select_inference: empty prediction");
    double mean = 0.0;
    for (double v : y_all[i].p) mean += v;
    mean /= static_cast<double>(y_all[i].p.size());
    if (mean > best_score) {
      best_score = mean;
      best = static_cast<int>(i);
    }
  }
  return {best, y_all[best].mask_long};
}

}  // namespace losh
