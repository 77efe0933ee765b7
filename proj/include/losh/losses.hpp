#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "losh/grid.hpp"

namespace losh {

// The loss hyperparameters, defaulting to 2/5/5/0.1 for the
// classification, segmentation, intersection and consistency weights.
struct LossWeights {
  double lambda_cls = 2.0;
  double lambda_seg = 5.0;
  double lambda_lsi = 5.0;
  double lambda_fbc = 0.1;
  double epsilon = 1.0;
  double tau = 0.5;
  double focal_alpha = 0.4;
  double focal_gamma = 2.0;
  double dice_smooth = 1.0;

  void validate() const {
    if (lambda_cls < 0 || lambda_seg < 0 || lambda_lsi < 0 || lambda_fbc < 0)
      throw std::invalid_argument("LossWeights: weights must be >= 0");
    if (tau < 0.0 || tau > 1.0)
      throw std::invalid_argument("LossWeights: tau outside [0,1]");
    if (epsilon <= 0.0)
      throw std::invalid_argument("LossWeights: epsilon must be positive");
  }
};

// Probabilities are clamped away from {0,1} before any log.
constexpr double kProbClamp = 1e-7;

namespace lossdetail {

inline double clamp_prob(double p) {
  return std::min(std::max(p, kProbClamp), 1.0 - kProbClamp);
}

}  // namespace lossdetail

// ---------------------------------------------------------------------------
// Long-short intersection loss. Per frame, with a/b the threshold-filtered
// long/short masks:  term = 1 - (sum(a*b) + eps) / (sum(a) + eps).
// The filter acts as a stop-gradient: zeroed pixels receive no gradient.
// ---------------------------------------------------------------------------

struct LsiResult {
  double loss = 0.0;
  std::vector<double> per_frame;
  std::vector<ProbMask> grad_long;
  std::vector<ProbMask> grad_short;
};

inline LsiResult lsi_loss(const std::vector<ProbMask>& m_long,
                          const std::vector<ProbMask>& m_short,
                          const LossWeights& w = {}) {
  w.validate();
  if (m_long.size() != m_short.size())
    throw std::invalid_argument("lsi_loss: frame count mismatch");
  LsiResult out;
  for (std::size_t t = 0; t < m_long.size(); ++t) {
    const ProbMask& ml = m_long[t];
    const ProbMask& ms = m_short[t];
    if (!ml.same_shape(ms))
      throw std::invalid_argument("lsi_loss: mask shape mismatch");

    double inter = 0.0, area = 0.0;
    const auto& vl = ml.values();
    const auto& vs = ms.values();
    for (std::size_t i = 0; i < vl.size(); ++i) {
      const double a = vl[i] >= w.tau ? vl[i] : 0.0;
      const double b = vs[i] >= w.tau ? vs[i] : 0.0;
      inter += a * b;
      area += a;
    }
    const double denom = area + w.epsilon;
    const double ratio = (inter + w.epsilon) / denom;
    out.per_frame.push_back(1.0 - ratio);
    out.loss += 1.0 - ratio;

    ProbMask gl(ml.height(), ml.width(), 0.0);
    ProbMask gs(ml.height(), ml.width(), 0.0);
    for (std::size_t i = 0; i < vl.size(); ++i) {
      const bool keep_l = vl[i] >= w.tau;
      const bool keep_s = vs[i] >= w.tau;
      const double b = keep_s ? vs[i] : 0.0;
      // d term / d a_i = ((inter+eps) - b*(area+eps)) / (area+eps)^2
      if (keep_l)
        gl.values()[i] = ((inter + w.epsilon) - b * denom) / (denom * denom);
      if (keep_s && keep_l) gs.values()[i] = -vl[i] / denom;
    }
    out.grad_long.push_back(std::move(gl));
    out.grad_short.push_back(std::move(gs));
  }
  return out;
}

// ---------------------------------------------------------------------------
// DICE loss: 1 - (2*sum(m*g) + s) / (sum(m) + sum(g) + s).
// ---------------------------------------------------------------------------

struct MaskLossResult {
  double loss = 0.0;
  ProbMask grad;
};

inline MaskLossResult dice_loss(const ProbMask& m, const BinaryMask& g,
                                double smooth = 1.0) {
  if (m.height() != g.height() || m.width() != g.width())
    throw std::invalid_argument("dice_loss: shape mismatch");
  double inter = 0.0, pred_sum = 0.0, gt_sum = 0.0;
  const auto& vm = m.values();
  const auto& vg = g.values();
  for (std::size_t i = 0; i < vm.size(); ++i) {
    inter += vm[i] * vg[i];
    pred_sum += vm[i];
    gt_sum += vg[i];
  }
  const double denom = pred_sum + gt_sum + smooth;
  const double num = 2.0 * inter + smooth;
  MaskLossResult out;
  out.loss = 1.0 - num / denom;
  out.grad = ProbMask(m.height(), m.width(), 0.0);
  for (std::size_t i = 0; i < vm.size(); ++i)
    out.grad.values()[i] = -(2.0 * vg[i] * denom - num) / (denom * denom);
  return out;
}

// ---------------------------------------------------------------------------
// Mask focal loss, mean over pixels, probability form:
//   -alpha*g*(1-m)^gamma*log(m) - (1-alpha)*(1-g)*m^gamma*log(1-m)
// ---------------------------------------------------------------------------

inline MaskLossResult focal_loss(const ProbMask& m, const BinaryMask& g,
                                 double alpha = 0.4, double gamma = 2.0) {
  if (m.height() != g.height() || m.width() != g.width())
    throw std::invalid_argument("focal_loss: shape mismatch");
  using lossdetail::clamp_prob;
  const auto& vm = m.values();
  const auto& vg = g.values();
  const double inv_n = 1.0 / static_cast<double>(vm.size());
  MaskLossResult out;
  out.grad = ProbMask(m.height(), m.width(), 0.0);
  for (std::size_t i = 0; i < vm.size(); ++i) {
    const double p = clamp_prob(vm[i]);
    const bool clamped = vm[i] < kProbClamp || vm[i] > 1.0 - kProbClamp;
    if (vg[i]) {
      const double q = 1.0 - p;
      out.loss += -alpha * std::pow(q, gamma) * std::log(p) * inv_n;
      if (!clamped)
        out.grad.values()[i] =
            -alpha * inv_n *
            (-gamma * std::pow(q, gamma - 1.0) * std::log(p) +
             std::pow(q, gamma) / p);
    } else {
      out.loss += -(1.0 - alpha) * std::pow(p, gamma) * std::log(1.0 - p) * inv_n;
      if (!clamped)
        out.grad.values()[i] =
            -(1.0 - alpha) * inv_n *
            (gamma * std::pow(p, gamma - 1.0) * std::log(1.0 - p) -
             std::pow(p, gamma) / (1.0 - p));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reference-score loss: mean binary cross-entropy over frames.
// ---------------------------------------------------------------------------

struct ClsResult {
  double loss = 0.0;
  std::vector<double> grad;
};

inline ClsResult cls_loss(const std::vector<double>& p,
                          const std::vector<std::uint8_t>& p_gt) {
  if (p.size() != p_gt.size())
    throw std::invalid_argument("cls_loss: length mismatch");
  if (p.empty()) throw std::invalid_argument("cls_loss: empty sequence");
  using lossdetail::clamp_prob;
  ClsResult out;
  out.grad.resize(p.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(p.size());
  for (std::size_t t = 0; t < p.size(); ++t) {
    const double q = clamp_prob(p[t]);
    const bool clamped = p[t] < kProbClamp || p[t] > 1.0 - kProbClamp;
    if (p_gt[t]) {
      out.loss += -std::log(q) * inv_n;
      if (!clamped) out.grad[t] = -inv_n / q;
    } else {
      out.loss += -std::log(1.0 - q) * inv_n;
      if (!clamped) out.grad[t] = inv_n / (1.0 - q);
    }
  }
  return out;
}

}  // namespace losh
