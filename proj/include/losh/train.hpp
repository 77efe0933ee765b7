#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "losh/flow.hpp"
#include "losh/matching.hpp"
#include "losh/metrics.hpp"
#include "losh/model.hpp"
#include "losh/synth.hpp"
#include "losh/warp.hpp"

namespace losh {

// Produces the (feature-resolution) neighbor flows for one annotated frame.
using FlowSource =
    std::function<std::vector<NeighborFlow>(const Sample&, int anchor)>;

struct TrainOptions {
  LossWeights weights;
  FlowParams flow_params;
  bool use_short = true;
  bool use_fbc = true;
  ConsistencyMode mode = ConsistencyMode::FORWARD_BACKWARD;
  bool fbc_normalize = false;
  // Optional override; the default computes dense flows and caches them.
  FlowSource flow_source;
};

struct TraceRow {
  int step = 0;
  double total = 0.0;
  double cls = 0.0, lseg = 0.0, sseg = 0.0, lsi = 0.0, fbc = 0.0;
};

struct TrainResult {
  ToyParams params;
  std::vector<TraceRow> trace;
};

class TrainingDiverged : public std::runtime_error {
 public:
  explicit TrainingDiverged(int step)
      : std::runtime_error("training diverged (non-finite loss) at step " +
                           std::to_string(step)),
        step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

namespace traindetail {

// Dense-flow provider with in-memory caching; flows are scaled down to the
// feature grid once.
class CachedFlowSource {
 public:
  CachedFlowSource(FlowParams params, bool need_opposite, int feat_h,
                   int feat_w)
      : params_(params),
        need_opposite_(need_opposite),
        feat_h_(feat_h),
        feat_w_(feat_w) {}

  std::vector<NeighborFlow> operator()(const Sample& sample, int anchor) {
    const std::string key = sample.id + "#" + std::to_string(anchor);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;

    std::vector<NeighborFlow> flows;
    GrayImage anchor_gray = to_gray(sample.clip.frames[anchor]);
    for (int t = -2; t <= 2; ++t) {
      if (t == 0) continue;
      const int j = anchor + t;
      if (j < 0 || j >= sample.clip.frame_count()) continue;
      GrayImage neighbor_gray = to_gray(sample.clip.frames[j]);
      NeighborFlow nf;
      nf.t = t;
      nf.to_neighbor = downscale_flow(
          farneback_flow(anchor_gray, neighbor_gray, params_), feat_h_, feat_w_);
      if (need_opposite_) {
        nf.from_neighbor = downscale_flow(
            farneback_flow(neighbor_gray, anchor_gray, params_), feat_h_,
            feat_w_);
        nf.has_from = true;
      }
      flows.push_back(std::move(nf));
    }
    cache_[key] = flows;
    return flows;
  }

 private:
  FlowParams params_;
  bool need_opposite_;
  int feat_h_, feat_w_;
  std::map<std::string, std::vector<NeighborFlow>> cache_;
};

inline GroundTruthSequence downsample_gt(const GroundTruthSequence& gt, int h,
                                         int w) {
  GroundTruthSequence small;
  small.visible = gt.visible;
  for (const auto& m : gt.masks) {
    if (m)
      small.masks.push_back(resize_nearest(*m, h, w));
    else
      small.masks.push_back(std::nullopt);
  }
  return small;
}

struct SampleLoss {
  double total = 0.0;
  CostBreakdown breakdown;
  double fbc_sum = 0.0;
  ToyParams grads;
  int selected = -1;
};

// One full loss-and-gradient evaluation of a sample under the current
// parameters.
inline SampleLoss sample_loss(const ToyModel& model, const ToyParams& params,
                              const Sample& sample,
                              const GroundTruthSequence& gt_small,
                              const TrainOptions& opt, FlowSource& flows) {
  SampleLoss out;
  const TextExpression& long_expr = sample.expression.long_expr;
  const TextExpression& short_expr = sample.expression.short_expr;

  ToyForward fwd = model.forward(params, sample.clip.frames, long_expr,
                                 opt.use_short ? &short_expr : nullptr);

  MatchResult match =
      select_best(fwd.predictions, gt_small, opt.weights, opt.use_short);
  out.selected = match.selected_index;

  std::vector<double> fbc_values;
  std::vector<FeatureMap> feature_grads;
  if (opt.use_fbc && opt.weights.lambda_fbc > 0.0) {
    feature_grads.assign(
        fwd.frames, FeatureMap(model.config().feature_channels, fwd.feat_h,
                               fwd.feat_w));
    for (int k : sample.clip.annotated_indices) {
      FbcResult r = fbc_loss(fwd.features, k, flows(sample, k), opt.mode,
                             opt.fbc_normalize);
      fbc_values.push_back(r.loss);
      for (const auto& [frame, grad] : r.feature_grads)
        for (std::size_t i = 0; i < grad.size(); ++i)
          feature_grads[frame].values()[i] +=
              opt.weights.lambda_fbc * grad.values()[i];
    }
  }

  FinalLossResult fl =
      final_loss(fwd.predictions[match.selected_index], gt_small, fbc_values,
                 opt.weights, opt.use_short);
  out.total = fl.total;
  out.breakdown = fl.breakdown;
  out.fbc_sum = fl.fbc_sum;

  OutputGrads og;
  og.query = match.selected_index;
  og.p = fl.grad_p;
  og.mask_long = fl.grad_mask_long;
  og.mask_short = fl.grad_mask_short;
  og.features = std::move(feature_grads);
  out.grads = model.backward(params, fwd, og);
  return out;
}

}  // namespace traindetail

// Plain stochastic gradient descent over the corpus in cyclic order.
inline TrainResult train(const ToyConfig& config,
                         const std::vector<Sample>& corpus,
                         const TrainOptions& opt_in = {}) {
  if (corpus.empty()) throw std::invalid_argument("train: empty corpus");
  TrainOptions opt = opt_in;
  opt.weights.validate();

  ToyModel model(config);
  TrainResult result;
  result.params = model.init_params();

  const int feat_h = corpus[0].clip.height() / config.feature_stride;
  const int feat_w = corpus[0].clip.width() / config.feature_stride;

  if (!opt.flow_source && opt.use_fbc && opt.weights.lambda_fbc > 0.0) {
    auto cached = std::make_shared<traindetail::CachedFlowSource>(
        opt.flow_params, opt.mode != ConsistencyMode::FORWARD_BACKWARD, feat_h,
        feat_w);
    opt.flow_source = [cached](const Sample& s, int k) {
      return (*cached)(s, k);
    };
  }

  std::vector<GroundTruthSequence> gt_small;
  for (const Sample& s : corpus)
    gt_small.push_back(traindetail::downsample_gt(s.gt, feat_h, feat_w));

  std::size_t cursor = 0;
  for (int step = 0; step < config.steps; ++step) {
    // Gradients sum over the batch; the trace row carries batch means.
    ToyParams batch_grads = model.zero_like();
    TraceRow row;
    row.step = step;
    const int batch = std::max(1, config.batch_size);
    for (int b = 0; b < batch; ++b) {
      const std::size_t si = cursor;
      cursor = (cursor + 1) % corpus.size();
      traindetail::SampleLoss sl = traindetail::sample_loss(
          model, result.params, corpus[si], gt_small[si], opt, opt.flow_source);
      if (!std::isfinite(sl.total)) throw TrainingDiverged(step);

      row.total += sl.total / batch;
      row.cls += sl.breakdown.cls / batch;
      row.lseg += sl.breakdown.lseg / batch;
      row.sseg += sl.breakdown.sseg / batch;
      row.lsi += sl.breakdown.lsi / batch;
      row.fbc += sl.fbc_sum / batch;

      std::vector<std::vector<double>*> av, bv;
      batch_grads.for_each_tensor(
          [&av](const char*, std::vector<double>& v) { av.push_back(&v); });
      sl.grads.for_each_tensor(
          [&bv](const char*, std::vector<double>& v) { bv.push_back(&v); });
      for (std::size_t t = 0; t < av.size(); ++t)
        for (std::size_t i = 0; i < av[t]->size(); ++i)
          (*av[t])[i] += (*bv[t])[i];
    }
    result.trace.push_back(row);

    const double lr = config.learning_rate / batch;
    std::vector<std::vector<double>*> pv, gv;
    result.params.for_each_tensor(
        [&pv](const char*, std::vector<double>& v) { pv.push_back(&v); });
    batch_grads.for_each_tensor(
        [&gv](const char*, std::vector<double>& v) { gv.push_back(&v); });
    for (std::size_t t = 0; t < pv.size(); ++t)
      for (std::size_t i = 0; i < pv[t]->size(); ++i)
        (*pv[t])[i] -= lr * (*gv[t])[i];
  }
  return result;
}

// Single-expression inference over a corpus: select the query with the
// highest mean reference score, upsample its masks to image resolution,
// binarize at 0.5 and compare against the annotated frames.
inline std::vector<EvalRecord> run_inference(const ToyConfig& config,
                                             const ToyParams& params,
                                             const std::vector<Sample>& corpus) {
  ToyModel model(config);
  std::vector<EvalRecord> records;
  for (const Sample& s : corpus) {
    ToyForward fwd = model.forward(params, s.clip.frames,
                                   s.expression.long_expr, nullptr);
    auto [idx, masks] = select_inference(fwd.predictions);

    EvalRecord rec;
    rec.sample_id = s.id;
    double conf = 0.0;
    for (double p : fwd.predictions[idx].p) conf += p;
    rec.confidence = conf / static_cast<double>(fwd.frames);

    for (int k : s.clip.annotated_indices) {
      ProbMask up = flowdetail::resize_bilinear(masks[k], s.clip.height(),
                                                s.clip.width());
      rec.predictions.push_back(binarize(up, 0.5));
      rec.ground_truth.push_back(*s.gt.masks[k]);
    }
    records.push_back(std::move(rec));
  }
  return records;
}

inline MetricReport evaluate(const ToyConfig& config, const ToyParams& params,
                             const std::vector<Sample>& corpus) {
  return compute_metrics(run_inference(config, params, corpus));
}

}  // namespace losh
