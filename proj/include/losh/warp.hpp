#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

#include "losh/grid.hpp"

namespace losh {

// Which direction(s) neighbor features are compared along.
//  FORWARD_BACKWARD: neighbors warped onto the anchor frame.
//  OPPOSITE:         anchor warped onto each neighbor.
//  MUTUAL:           sum of both.
enum class ConsistencyMode { FORWARD_BACKWARD, OPPOSITE, MUTUAL };

// Flow pair between an anchor frame k and its neighbor k+t.
//  to_neighbor:   displacements anchored at frame k, pointing into k+t.
//  from_neighbor: displacements anchored at frame k+t, pointing into k.
struct NeighborFlow {
  int t = 0;
  FlowField to_neighbor;
  FlowField from_neighbor;
  bool has_from = false;
};

// Average-pools a displacement field to h x w and rescales u,v into the
// smaller grid's pixel units.
inline FlowField downscale_flow(const FlowField& o, int h, int w) {
  if (h > o.height() || w > o.width())
    throw std::invalid_argument("downscale_flow: upscaling not supported");
  if (h <= 0 || w <= 0)
    throw std::invalid_argument("downscale_flow: bad target shape");
  FlowField out(h, w);
  const double su = static_cast<double>(w) / o.width();
  const double sv = static_cast<double>(h) / o.height();
  const double cell_h = static_cast<double>(o.height()) / h;
  const double cell_w = static_cast<double>(o.width()) / w;
  for (int y = 0; y < h; ++y) {
    const double y0 = y * cell_h, y1 = (y + 1) * cell_h;
    for (int x = 0; x < w; ++x) {
      const double x0 = x * cell_w, x1 = (x + 1) * cell_w;
      double usum = 0.0, vsum = 0.0, area = 0.0;
      for (int sy = static_cast<int>(y0); sy < y1; ++sy) {
        // Fractional coverage of source row sy by the output cell.
        double wy = std::min<double>(sy + 1, y1) - std::max<double>(sy, y0);
        for (int sx = static_cast<int>(x0); sx < x1; ++sx) {
          double wx = std::min<double>(sx + 1, x1) - std::max<double>(sx, x0);
          usum += wy * wx * o.u(sy, sx);
          vsum += wy * wx * o.v(sy, sx);
          area += wy * wx;
        }
      }
      out.u(y, x) = usum / area * su;
      out.v(y, x) = vsum / area * sv;
    }
  }
  return out;
}

namespace warpdetail {

struct Corner {
  int x0, x1, y0, y1;
  double wx, wy;
};

inline Corner sample_corners(double sx, double sy, int h, int w) {
  sx = std::min(std::max(sx, 0.0), static_cast<double>(w - 1));
  sy = std::min(std::max(sy, 0.0), static_cast<double>(h - 1));
  Corner c;
  c.x0 = static_cast<int>(sx);
  c.y0 = static_cast<int>(sy);
  c.x1 = std::min(c.x0 + 1, w - 1);
  c.y1 = std::min(c.y0 + 1, h - 1);
  c.wx = sx - c.x0;
  c.wy = sy - c.y0;
  return c;
}

}  // namespace warpdetail

// Bilinear resample of f along o: output(c,y,x) = f(c, y+v, x+u), with
// sample coordinates clamped to the grid (edge replication). Zero flow
// reproduces f exactly.
inline FeatureMap warp(const FeatureMap& f, const FlowField& o) {
  if (o.height() != f.height() || o.width() != f.width())
    throw std::invalid_argument("warp: flow/feature shape mismatch");
  FeatureMap out(f.channels(), f.height(), f.width());
  for (int y = 0; y < f.height(); ++y)
    for (int x = 0; x < f.width(); ++x) {
      auto c = warpdetail::sample_corners(x + o.u(y, x), y + o.v(y, x),
                                          f.height(), f.width());
      for (int ch = 0; ch < f.channels(); ++ch) {
        double top = (1.0 - c.wx) * f(ch, c.y0, c.x0) + c.wx * f(ch, c.y0, c.x1);
        double bot = (1.0 - c.wx) * f(ch, c.y1, c.x0) + c.wx * f(ch, c.y1, c.x1);
        out(ch, y, x) = (1.0 - c.wy) * top + c.wy * bot;
      }
    }
  return out;
}

// Adjoint of warp: scatters each upstream element onto the four source
// corners it sampled, with the same bilinear weights.
inline FeatureMap warp_grad(const FeatureMap& upstream, const FlowField& o) {
  if (o.height() != upstream.height() || o.width() != upstream.width())
    throw std::invalid_argument("warp_grad: flow/feature shape mismatch");
  FeatureMap grad(upstream.channels(), upstream.height(), upstream.width());
  for (int y = 0; y < upstream.height(); ++y)
    for (int x = 0; x < upstream.width(); ++x) {
      auto c = warpdetail::sample_corners(x + o.u(y, x), y + o.v(y, x),
                                          upstream.height(), upstream.width());
      for (int ch = 0; ch < upstream.channels(); ++ch) {
        double g = upstream(ch, y, x);
        grad(ch, c.y0, c.x0) += (1.0 - c.wx) * (1.0 - c.wy) * g;
        grad(ch, c.y0, c.x1) += c.wx * (1.0 - c.wy) * g;
        grad(ch, c.y1, c.x0) += (1.0 - c.wx) * c.wy * g;
        grad(ch, c.y1, c.x1) += c.wx * c.wy * g;
      }
    }
  return grad;
}

struct FbcResult {
  double loss = 0.0;
  // Gradients w.r.t. each involved frame's features, keyed by frame index.
  std::map<int, FeatureMap> feature_grads;

  const FeatureMap* grad_for(int frame) const {
    auto it = feature_grads.find(frame);
    return it == feature_grads.end() ? nullptr : &it->second;
  }
};

// Visual consistency loss at anchor frame k: a sum over available
// neighbors of the Euclidean norm of the feature difference after warping.
// Flows must already live at feature resolution. Gradients flow into the
// features only; displacements are constants. When `normalize` is set each
// norm is divided by sqrt(c*h*w).
inline FbcResult fbc_loss(const std::vector<FeatureMap>& features, int k,
                          const std::vector<NeighborFlow>& flows,
                          ConsistencyMode mode, bool normalize = false) {
  if (k < 0 || k >= static_cast<int>(features.size()))
    throw std::invalid_argument("fbc_loss: anchor index out of range");
  const FeatureMap& anchor = features[k];

  FbcResult result;
  auto grad_of = [&](int frame) -> FeatureMap& {
    auto it = result.feature_grads.find(frame);
    if (it == result.feature_grads.end())
      it = result.feature_grads
               .emplace(frame, FeatureMap(anchor.channels(), anchor.height(),
                                          anchor.width()))
               .first;
    return it->second;
  };

  const double norm_scale =
      normalize ? 1.0 / std::sqrt(static_cast<double>(anchor.size())) : 1.0;

  // Directions accumulate separately so the mutual total equals the sum of
  // the two single-direction losses bit for bit.
  double fwd_total = 0.0, opp_total = 0.0;

  for (const NeighborFlow& nf : flows) {
    if (nf.t == 0) continue;  // the anchor itself contributes nothing
    const int j = k + nf.t;
    if (j < 0 || j >= static_cast<int>(features.size()))
      throw std::invalid_argument("fbc_loss: neighbor outside clip");
    if (!features[j].same_shape(anchor))
      throw std::invalid_argument("fbc_loss: feature shape mismatch");

    const bool fwd = mode != ConsistencyMode::OPPOSITE;
    const bool opp = mode != ConsistencyMode::FORWARD_BACKWARD;

    if (fwd) {
      if (nf.to_neighbor.height() != anchor.height() ||
          nf.to_neighbor.width() != anchor.width())
        throw std::invalid_argument("fbc_loss: flow not at feature resolution");
      FeatureMap warped = warp(features[j], nf.to_neighbor);
      double sq = 0.0;
      for (std::size_t i = 0; i < warped.size(); ++i) {
        warped.values()[i] -= anchor.values()[i];  // becomes the difference
        sq += warped.values()[i] * warped.values()[i];
      }
      const double norm = std::sqrt(sq);
      fwd_total += norm * norm_scale;
      if (norm >= 1e-12) {
        const double s = norm_scale / norm;
        FeatureMap& ga = grad_of(k);
        for (std::size_t i = 0; i < warped.size(); ++i) {
          ga.values()[i] -= s * warped.values()[i];
          warped.values()[i] *= s;  // upstream for the warp adjoint
        }
        FeatureMap gj = warp_grad(warped, nf.to_neighbor);
        FeatureMap& gn = grad_of(j);
        for (std::size_t i = 0; i < gj.size(); ++i)
          gn.values()[i] += gj.values()[i];
      }
    }

    if (opp) {
      if (!nf.has_from)
        throw std::invalid_argument(
            "fbc_loss: opposite-direction flow missing for neighbor");
      if (nf.from_neighbor.height() != anchor.height() ||
          nf.from_neighbor.width() != anchor.width())
        throw std::invalid_argument("fbc_loss: flow not at feature resolution");
      FeatureMap warped = warp(anchor, nf.from_neighbor);
      double sq = 0.0;
      for (std::size_t i = 0; i < warped.size(); ++i) {
        warped.values()[i] -= features[j].values()[i];
        sq += warped.values()[i] * warped.values()[i];
      }
      const double norm = std::sqrt(sq);
      opp_total += norm * norm_scale;
      if (norm >= 1e-12) {
        const double s = norm_scale / norm;
        FeatureMap& gj = grad_of(j);
        for (std::size_t i = 0; i < warped.size(); ++i) {
          gj.values()[i] -= s * warped.values()[i];
          warped.values()[i] *= s;
        }
        FeatureMap ga = warp_grad(warped, nf.from_neighbor);
        FeatureMap& gk = grad_of(k);
        for (std::size_t i = 0; i < ga.size(); ++i)
          gk.values()[i] += ga.values()[i];
      }
    }
  }
  result.loss = fwd_total + opp_total;
  return result;
}

}  // namespace losh
