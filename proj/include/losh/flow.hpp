#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "losh/grid.hpp"

namespace losh {

// Parameters of the dense polynomial-expansion flow estimator.
struct FlowParams {
  int pyramid_levels = 3;
  double pyramid_scale = 0.5;
  int window_size = 15;
  int iterations = 3;
  int poly_neighborhood = 5;
  double poly_sigma = 1.1;

  void validate() const {
    if (pyramid_levels < 1)
      throw std::invalid_argument("FlowParams: pyramid_levels must be >= 1");
    if (!(pyramid_scale > 0.0 && pyramid_scale < 1.0))
      throw std::invalid_argument("FlowParams: pyramid_scale outside (0,1)");
    if (iterations < 1)
      throw std::invalid_argument("FlowParams: iterations must be >= 1");
    if (window_size < 3 || window_size % 2 == 0)
      throw std::invalid_argument("FlowParams: window_size must be odd >= 3");
    if (poly_neighborhood < 3 || poly_neighborhood % 2 == 0)
      throw std::invalid_argument(
          "FlowParams: poly_neighborhood must be odd >= 3");
    if (poly_sigma <= 0.0)
      throw std::invalid_argument("FlowParams: poly_sigma must be positive");
  }
};

namespace flowdetail {

// Ridge added to the blurred normal equations; keeps textureless windows at
// zero displacement instead of dividing by a vanishing determinant.
constexpr double kTikhonov = 1e-3;

inline int clampi(int v, int lo, int hi) { return std::min(std::max(v, lo), hi); }

inline GrayImage gaussian_blur(const GrayImage& src, double sigma) {
  if (sigma <= 0.0) return src;
  int radius = std::max(1, static_cast<int>(sigma * 2.5 + 0.5));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += kernel[i + radius];
  }
  for (double& k : kernel) k /= sum;

  const int h = src.height(), w = src.width();
  GrayImage tmp(h, w), out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[i + radius] * src(y, clampi(x + i, 0, w - 1));
      tmp(y, x) = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[i + radius] * tmp(clampi(y + i, 0, h - 1), x);
      out(y, x) = acc;
    }
  return out;
}

inline GrayImage resize_bilinear(const GrayImage& src, int oh, int ow) {
  if (oh == src.height() && ow == src.width()) return src;
  GrayImage out(oh, ow);
  const double sy = static_cast<double>(src.height()) / oh;
  const double sx = static_cast<double>(src.width()) / ow;
  for (int y = 0; y < oh; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    int y0 = static_cast<int>(std::floor(fy));
    double wy = fy - y0;
    int y0c = clampi(y0, 0, src.height() - 1);
    int y1c = clampi(y0 + 1, 0, src.height() - 1);
    for (int x = 0; x < ow; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      int x0 = static_cast<int>(std::floor(fx));
      double wx = fx - x0;
      int x0c = clampi(x0, 0, src.width() - 1);
      int x1c = clampi(x0 + 1, 0, src.width() - 1);
      double top = (1.0 - wx) * src(y0c, x0c) + wx * src(y0c, x1c);
      double bot = (1.0 - wx) * src(y1c, x0c) + wx * src(y1c, x1c);
      out(y, x) = (1.0 - wy) * top + wy * bot;
    }
  }
  return out;
}

// Quadratic expansion coefficients per pixel:
//   f(p + q) ~ c + bx*qx + by*qy + axx*qx^2 + ayy*qy^2 + axy*qx*qy
struct PolyGrid {
  Grid<double> bx, by, axx, ayy, axy;

  explicit PolyGrid(int h, int w)
      : bx(h, w), by(h, w), axx(h, w), ayy(h, w), axy(h, w) {}
};

// Separable correlations with Gaussian applicability; the Gram matrix of
// the basis (1,x,y,x^2,y^2,xy) is diagonal apart from the (1,x^2,y^2)
// block, whose inverse reduces to the two scalars ig03 and ig33 because
// the x^2/y^2 cross moment equals m2^2 for separable weights.
inline PolyGrid poly_expansion(const GrayImage& img, int n_full, double sigma) {
  const int n = n_full / 2;
  const int h = img.height(), w = img.width();

  std::vector<double> g(2 * n + 1);
  double sum = 0.0;
  for (int i = -n; i <= n; ++i) {
    g[i + n] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += g[i + n];
  }
  for (double& v : g) v /= sum;

  double m2 = 0.0, m4 = 0.0;
  for (int i = -n; i <= n; ++i) {
    m2 += g[i + n] * i * i;
    m4 += g[i + n] * i * i * i * i;
  }
  const double ig11 = 1.0 / m2;
  const double ig55 = 1.0 / (m2 * m2);
  const double ig33 = 1.0 / (m4 - m2 * m2);
  const double ig03 = -m2 / (m4 - m2 * m2);

  PolyGrid out(h, w);
  // Per-row buffers of vertical moments (0th, y, y^2) for every column.
  std::vector<double> s0(w), s1(w), s2(w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double a0 = g[n] * img(y, x), a1 = 0.0, a2 = 0.0;
      for (int k = 1; k <= n; ++k) {
        double lo = img(clampi(y - k, 0, h - 1), x);
        double hi = img(clampi(y + k, 0, h - 1), x);
        a0 += g[n + k] * (lo + hi);
        a1 += g[n + k] * k * (hi - lo);
        a2 += g[n + k] * k * k * (lo + hi);
      }
      s0[x] = a0;
      s1[x] = a1;
      s2[x] = a2;
    }
    for (int x = 0; x < w; ++x) {
      double m0 = g[n] * s0[x];
      double mx = 0.0, mxx = 0.0;
      double my = g[n] * s1[x];
      double mxy = 0.0;
      double myy = g[n] * s2[x];
      for (int k = 1; k <= n; ++k) {
        int xl = clampi(x - k, 0, w - 1), xr = clampi(x + k, 0, w - 1);
        m0 += g[n + k] * (s0[xl] + s0[xr]);
        mx += g[n + k] * k * (s0[xr] - s0[xl]);
        mxx += g[n + k] * k * k * (s0[xl] + s0[xr]);
        my += g[n + k] * (s1[xl] + s1[xr]);
        mxy += g[n + k] * k * (s1[xr] - s1[xl]);
        myy += g[n + k] * (s2[xl] + s2[xr]);
      }
      out.bx(y, x) = mx * ig11;
      out.by(y, x) = my * ig11;
      out.axx(y, x) = m0 * ig03 + mxx * ig33;
      out.ayy(y, x) = m0 * ig03 + myy * ig33;
      out.axy(y, x) = mxy * ig55;
    }
  }
  return out;
}

// Per-pixel normal equations G*d = h of the displacement least squares,
// before window averaging. Planes: gxx, gxy, gyy, hx, hy.
struct NormalGrid {
  Grid<double> gxx, gxy, gyy, hx, hy;

  explicit NormalGrid(int h, int w)
      : gxx(h, w), gxy(h, w), gyy(h, w), hx(h, w), hy(h, w) {}
};

inline void update_normal_equations(const PolyGrid& r0, const PolyGrid& r1,
                                    const FlowField& flow, NormalGrid& m) {
  const int h = flow.height(), w = flow.width();
  // Downweights for the outermost pixels, whose expansions lean on
  // replicated borders.
  static constexpr int kBorder = 5;
  static constexpr std::array<double, kBorder> kBorderScale = {
      0.14, 0.14, 0.4472, 0.4472, 0.4472};

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double dx = flow.u(y, x), dy = flow.v(y, x);
      const int x1 = static_cast<int>(std::lround(x + dx));
      const int y1 = static_cast<int>(std::lround(y + dy));

      double a11, a22, a12, bx, by;
      if (x1 >= 0 && x1 < w && y1 >= 0 && y1 < h) {
        a11 = (r0.axx(y, x) + r1.axx(y1, x1)) * 0.5;
        a22 = (r0.ayy(y, x) + r1.ayy(y1, x1)) * 0.5;
        a12 = (r0.axy(y, x) + r1.axy(y1, x1)) * 0.25;
        bx = (r0.bx(y, x) - r1.bx(y1, x1)) * 0.5;
        by = (r0.by(y, x) - r1.by(y1, x1)) * 0.5;
      } else {
        a11 = r0.axx(y, x);
        a22 = r0.ayy(y, x);
        a12 = r0.axy(y, x) * 0.5;
        bx = r0.bx(y, x) * 0.5;
        by = r0.by(y, x) * 0.5;
      }

      // Right-hand side relative to the current displacement estimate.
      bx += a11 * dx + a12 * dy;
      by += a12 * dx + a22 * dy;

      double scale = 1.0;
      if (x < kBorder) scale *= kBorderScale[x];
      if (w - 1 - x < kBorder) scale *= kBorderScale[w - 1 - x];
      if (y < kBorder) scale *= kBorderScale[y];
      if (h - 1 - y < kBorder) scale *= kBorderScale[h - 1 - y];
      a11 *= scale;
      a22 *= scale;
      a12 *= scale;
      bx *= scale;
      by *= scale;

      m.gxx(y, x) = a11 * a11 + a12 * a12;
      m.gxy(y, x) = (a11 + a22) * a12;
      m.gyy(y, x) = a22 * a22 + a12 * a12;
      m.hx(y, x) = a11 * bx + a12 * by;
      m.hy(y, x) = a12 * bx + a22 * by;
    }
  }
}

inline void box_blur(const Grid<double>& src, int radius, Grid<double>& dst) {
  const int h = src.height(), w = src.width();
  Grid<double> tmp(h, w);
  const double inv = 1.0 / (2 * radius + 1);
  for (int y = 0; y < h; ++y) {
    double acc = 0.0;
    for (int i = -radius; i <= radius; ++i) acc += src(y, clampi(i, 0, w - 1));
    tmp(y, 0) = acc * inv;
    for (int x = 1; x < w; ++x) {
      acc += src(y, clampi(x + radius, 0, w - 1)) -
             src(y, clampi(x - radius - 1, 0, w - 1));
      tmp(y, x) = acc * inv;
    }
  }
  for (int x = 0; x < w; ++x) {
    double acc = 0.0;
    for (int i = -radius; i <= radius; ++i) acc += tmp(clampi(i, 0, h - 1), x);
    dst(0, x) = acc * inv;
  }
  for (int y = 1; y < h; ++y) {
    for (int x = 0; x < w; ++x)
      dst(y, x) = dst(y - 1, x) + (tmp(clampi(y + radius, 0, h - 1), x) -
                                   tmp(clampi(y - radius - 1, 0, h - 1), x)) *
                                      inv;
  }
}

inline void solve_flow(const NormalGrid& m, int window, FlowField& flow) {
  const int h = flow.height(), w = flow.width();
  const int radius = window / 2;
  NormalGrid blurred(h, w);
  box_blur(m.gxx, radius, blurred.gxx);
  box_blur(m.gxy, radius, blurred.gxy);
  box_blur(m.gyy, radius, blurred.gyy);
  box_blur(m.hx, radius, blurred.hx);
  box_blur(m.hy, radius, blurred.hy);

  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double gxx = blurred.gxx(y, x) + kTikhonov;
      const double gyy = blurred.gyy(y, x) + kTikhonov;
      const double gxy = blurred.gxy(y, x);
      const double hx = blurred.hx(y, x);
      const double hy = blurred.hy(y, x);
      const double det = gxx * gyy - gxy * gxy;
      flow.u(y, x) = (gyy * hx - gxy * hy) / det;
      flow.v(y, x) = (gxx * hy - gxy * hx) / det;
    }
}

}  // namespace flowdetail

// Dense displacement field mapping each src pixel (x,y) to (x+u, y+v) in
// dst. Quadratic expansion per pixel, displacement from coefficient
// differences, window-averaged normal equations, coarse-to-fine refinement.
inline FlowField farneback_flow(const GrayImage& src, const GrayImage& dst,
                                const FlowParams& params = {}) {
  using namespace flowdetail;
  params.validate();
  if (!src.same_shape(dst))
    throw std::invalid_argument("farneback_flow: shape mismatch");

  const int H = src.height(), W = src.width();

  // The ridge constant below assumes 8-bit-scale intensities; unit-range
  // inputs are rescaled so the normal equations see the same magnitudes.
  GrayImage src8 = src, dst8 = dst;
  for (double& v : src8.values()) v *= 255.0;
  for (double& v : dst8.values()) v *= 255.0;

  int levels = 1;
  for (int l = 1; l < params.pyramid_levels; ++l) {
    double s = std::pow(params.pyramid_scale, l);
    if (std::min(H, W) * s < 12.0) break;
    levels = l + 1;
  }

  FlowField flow;
  int prev_w = 0, prev_h = 0;
  for (int level = levels - 1; level >= 0; --level) {
    const double scale = std::pow(params.pyramid_scale, level);
    const int lw = std::max(3, static_cast<int>(std::lround(W * scale)));
    const int lh = std::max(3, static_cast<int>(std::lround(H * scale)));
    const double sigma = std::max((1.0 / scale - 1.0) * 0.5, 0.8);

    GrayImage a = resize_bilinear(gaussian_blur(src8, sigma), lh, lw);
    GrayImage b = resize_bilinear(gaussian_blur(dst8, sigma), lh, lw);
    PolyGrid r0 = poly_expansion(a, params.poly_neighborhood, params.poly_sigma);
    PolyGrid r1 = poly_expansion(b, params.poly_neighborhood, params.poly_sigma);

    if (prev_w == 0) {
      flow = FlowField(lh, lw);
    } else {
      FlowField up(lh, lw);
      const double su = static_cast<double>(lw) / prev_w;
      const double sv = static_cast<double>(lh) / prev_h;
      for (int y = 0; y < lh; ++y)
        for (int x = 0; x < lw; ++x) {
          double fy = (y + 0.5) / sv - 0.5;
          double fx = (x + 0.5) / su - 0.5;
          int y0 = clampi(static_cast<int>(std::floor(fy)), 0, prev_h - 1);
          int x0 = clampi(static_cast<int>(std::floor(fx)), 0, prev_w - 1);
          int y1 = std::min(y0 + 1, prev_h - 1);
          int x1 = std::min(x0 + 1, prev_w - 1);
          double wy = std::min(std::max(fy - y0, 0.0), 1.0);
          double wx = std::min(std::max(fx - x0, 0.0), 1.0);
          double utop = (1 - wx) * flow.u(y0, x0) + wx * flow.u(y0, x1);
          double ubot = (1 - wx) * flow.u(y1, x0) + wx * flow.u(y1, x1);
          double vtop = (1 - wx) * flow.v(y0, x0) + wx * flow.v(y0, x1);
          double vbot = (1 - wx) * flow.v(y1, x0) + wx * flow.v(y1, x1);
          up.u(y, x) = ((1 - wy) * utop + wy * ubot) * su;
          up.v(y, x) = ((1 - wy) * vtop + wy * vbot) * sv;
        }
      flow = std::move(up);
    }

    NormalGrid m(lh, lw);
    update_normal_equations(r0, r1, flow, m);
    for (int it = 0; it < params.iterations; ++it) {
      solve_flow(m, params.window_size, flow);
      if (it + 1 < params.iterations) update_normal_equations(r0, r1, flow, m);
    }
    prev_w = lw;
    prev_h = lh;
  }
  return flow;
}

inline FlowField farneback_flow(const Image& src, const Image& dst,
                                const FlowParams& params = {}) {
  return farneback_flow(to_gray(src), to_gray(dst), params);
}

// Flows from frame k to its temporal neighbors k+t, t in
// {-radius..-1, 1..radius}; neighbors outside the clip are omitted.
inline std::vector<std::pair<int, FlowField>> clip_flows(
    const VideoClip& clip, int k, int radius = 2, const FlowParams& params = {}) {
  if (k < 0 || k >= clip.frame_count())
    throw std::invalid_argument("clip_flows: frame index out of range");
  if (radius < 1) throw std::invalid_argument("clip_flows: radius must be >= 1");
  GrayImage anchor = to_gray(clip.frames[k]);
  std::vector<std::pair<int, FlowField>> flows;
  for (int t = -radius; t <= radius; ++t) {
    if (t == 0) continue;
    int j = k + t;
    if (j < 0 || j >= clip.frame_count()) continue;
    flows.emplace_back(t, farneback_flow(anchor, to_gray(clip.frames[j]), params));
  }
  return flows;
}

}  // namespace losh
