#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "losh/flow.hpp"
#include "losh/grid.hpp"
#include "losh/io.hpp"
#include "losh/matching.hpp"
#include "losh/metrics.hpp"
#include "losh/rng.hpp"
#include "losh/synth.hpp"
#include "losh/text.hpp"
#include "losh/warp.hpp"

namespace losh {

// The corpus template vocabulary; anything else maps to the OOV row.
inline std::vector<std::string> default_vocab() {
  std::vector<std::string> v = {"a", "is", "moving", "still",
                                "left", "right", "up", "down"};
  for (const PaletteColor& c : palette()) v.push_back(c.name);
  for (Shape s : {Shape::SQUARE, Shape::CIRCLE, Shape::TRIANGLE})
    v.push_back(to_string(s));
  return v;
}

struct ToyConfig {
  int num_queries = 4;
  int hidden_dim = 32;
  int feature_channels = 16;
  int feature_stride = 4;
  int clip_window = 5;
  double learning_rate = 0.05;
  int batch_size = 4;
  int steps = 200;
  std::uint64_t seed = 1;
  std::vector<std::string> vocab = default_vocab();

  void validate() const {
    if (num_queries < 2)
      throw std::invalid_argument("ToyConfig: need at least two queries");
    if (hidden_dim < 1 || feature_channels < 1)
      throw std::invalid_argument("ToyConfig: bad dimensions");
    if (feature_stride != 1 && feature_stride != 2 && feature_stride != 4)
      throw std::invalid_argument("ToyConfig: feature_stride must be 1, 2 or 4");
    if (clip_window < 1) throw std::invalid_argument("ToyConfig: bad window");
    if (vocab.empty()) throw std::invalid_argument("ToyConfig: empty vocab");
  }

  int stride1() const { return feature_stride >= 2 ? 2 : 1; }
  int stride2() const { return feature_stride == 4 ? 2 : 1; }
};

// All learnable tensors, flat row-major.
struct ToyParams {
  std::vector<double> conv1_w, conv1_b;    // [c][3][3][3], [c]
  std::vector<double> conv2_w, conv2_b;    // [c][c][3][3], [c]
  std::vector<double> embed;               // [vocab+1][D]
  std::vector<double> query;               // [N][D]
  std::vector<double> fuse_w, fuse_b;      // [c][c+D], [c]
  std::vector<double> qhead_w, qhead_b;    // [D][2D], [D]
  std::vector<double> kernel_w, kernel_b;  // [c+1][D], [c+1]
  std::vector<double> score_w, score_b;    // [c][D], [c]

  template <typename Fn>
  void for_each_tensor(Fn&& fn) {
    fn("conv1.weight", conv1_w);
    fn("conv1.bias", conv1_b);
    fn("conv2.weight", conv2_w);
    fn("conv2.bias", conv2_b);
    fn("embed.weight", embed);
    fn("query.weight", query);
    fn("fuse.weight", fuse_w);
    fn("fuse.bias", fuse_b);
    fn("qhead.weight", qhead_w);
    fn("qhead.bias", qhead_b);
    fn("kernel.weight", kernel_w);
    fn("kernel.bias", kernel_b);
    fn("score.weight", score_w);
    fn("score.bias", score_b);
  }

  template <typename Fn>
  void for_each_tensor(Fn&& fn) const {
    const_cast<ToyParams*>(this)->for_each_tensor(
        [&fn](const char* name, std::vector<double>& v) {
          fn(name, const_cast<const std::vector<double>&>(v));
        });
  }

  bool all_finite() const {
    bool ok = true;
    for_each_tensor([&ok](const char*, const std::vector<double>& v) {
      for (double x : v)
        if (!std::isfinite(x)) ok = false;
    });
    return ok;
  }
};

namespace toydetail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct ConvShape {
  int in_c, out_c, in_h, in_w, out_h, out_w, stride;
};

inline int conv_out(int n, int stride) { return (n + 2 - 3) / stride + 1; }

// 3x3 convolution, zero padding of 1.
inline void conv_forward(const std::vector<double>& w,
                         const std::vector<double>& b,
                         const std::vector<double>& in,
                         std::vector<double>& out, const ConvShape& s) {
  out.assign(static_cast<std::size_t>(s.out_c) * s.out_h * s.out_w, 0.0);
  for (int oc = 0; oc < s.out_c; ++oc)
    for (int oy = 0; oy < s.out_h; ++oy)
      for (int ox = 0; ox < s.out_w; ++ox) {
        double acc = b[oc];
        for (int ic = 0; ic < s.in_c; ++ic)
          for (int ky = 0; ky < 3; ++ky) {
            const int iy = oy * s.stride + ky - 1;
            if (iy < 0 || iy >= s.in_h) continue;
            for (int kx = 0; kx < 3; ++kx) {
              const int ix = ox * s.stride + kx - 1;
              if (ix < 0 || ix >= s.in_w) continue;
              acc += w[((static_cast<std::size_t>(oc) * s.in_c + ic) * 3 + ky) *
                           3 +
                       kx] *
                     in[(static_cast<std::size_t>(ic) * s.in_h + iy) * s.in_w +
                        ix];
            }
          }
        out[(static_cast<std::size_t>(oc) * s.out_h + oy) * s.out_w + ox] = acc;
      }
}

inline void conv_backward(const std::vector<double>& w,
                          const std::vector<double>& in,
                          const std::vector<double>& dout,
                          std::vector<double>& dw, std::vector<double>& db,
                          std::vector<double>& din, const ConvShape& s) {
  din.assign(in.size(), 0.0);
  for (int oc = 0; oc < s.out_c; ++oc)
    for (int oy = 0; oy < s.out_h; ++oy)
      for (int ox = 0; ox < s.out_w; ++ox) {
        const double g =
            dout[(static_cast<std::size_t>(oc) * s.out_h + oy) * s.out_w + ox];
        if (g == 0.0) continue;
        db[oc] += g;
        for (int ic = 0; ic < s.in_c; ++ic)
          for (int ky = 0; ky < 3; ++ky) {
            const int iy = oy * s.stride + ky - 1;
            if (iy < 0 || iy >= s.in_h) continue;
            for (int kx = 0; kx < 3; ++kx) {
              const int ix = ox * s.stride + kx - 1;
              if (ix < 0 || ix >= s.in_w) continue;
              const std::size_t wi =
                  ((static_cast<std::size_t>(oc) * s.in_c + ic) * 3 + ky) * 3 +
                  kx;
              const std::size_t ii =
                  (static_cast<std::size_t>(ic) * s.in_h + iy) * s.in_w + ix;
              dw[wi] += g * in[ii];
              din[ii] += g * w[wi];
            }
          }
      }
}

}  // namespace toydetail

// Per-branch activations kept for the backward pass.
struct BranchCache {
  std::vector<int> token_ids;
  std::vector<double> z;                       // D
  std::vector<std::vector<double>> fused_pre;  // per frame, [c][h][w] pre-tanh
  std::vector<std::vector<double>> fused;      // per frame, tanh
  std::vector<std::vector<double>> head_pre;   // per query, [D]
  std::vector<std::vector<double>> head;       // per query, [D]
  std::vector<std::vector<double>> kernels;    // per query, [c+1]
  std::vector<std::vector<double>> scores;     // per query, [c+1]
  // masks[i][t] is the sigmoid probability grid of query i at frame t
  std::vector<std::vector<ProbMask>> masks;
  // Mask-weighted feature pooling per query and frame: the score head
  // reads only what the query's own mask covers, so an empty mask pins
  // its reference score at one half.
  std::vector<std::vector<std::vector<double>>> mask_pooled;  // [i][t][c]
  std::vector<std::vector<double>> mask_denom;                // [i][t]
};

struct ToyForward {
  int frames = 0;
  int feat_h = 0, feat_w = 0;
  long encoder_invocations = 0;

  std::vector<std::vector<double>> input;     // per frame, [3][H][W]
  std::vector<std::vector<double>> act1_pre;  // per frame, conv1 pre-tanh
  std::vector<std::vector<double>> act1;      // tanh
  std::vector<std::vector<double>> act2_pre;  // conv2 pre-tanh
  std::vector<FeatureMap> features;           // tanh, per frame

  BranchCache long_branch;
  BranchCache short_branch;
  bool has_short = false;

  std::vector<QuerySequencePrediction> predictions;
};

// Gradients of the training loss with respect to model outputs, as routed
// by the matching stage. Only the selected query receives anything.
struct OutputGrads {
  int query = 0;
  std::vector<double> p;                // per frame
  std::vector<ProbMask> mask_long;      // per frame
  std::vector<ProbMask> mask_short;     // empty when single-expression
  std::vector<FeatureMap> features;     // per frame, may be empty
};

class ToyModel {
 public:
  explicit ToyModel(ToyConfig config) : config_(std::move(config)) {
    config_.validate();
  }

  const ToyConfig& config() const { return config_; }

  ToyParams init_params() const {
    ToyParams p;
    shape_params(p);
    p.for_each_tensor([this](const char* name, std::vector<double>& v) {
      // The per-query output projections start at zero so every query is
      // functionally identical at step one: matching then tie-breaks to
      // query 0 deterministically and ownership concentrates in a single
      // globally trained query. With random output projections, queries
      // split the corpus and the untrained ones keep arbitrary reference
      // scores, which defeats the mean-score selection rule at inference.
      if (std::string_view(name) == "kernel.weight" ||
          std::string_view(name) == "score.weight")
        return;
      RandomStream rng(config_.seed, std::string("param/") + name);
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in(name)));
      for (double& x : v) x = rng.next_range(-bound, bound);
    });
    return p;
  }

  ToyParams zero_like() const {
    ToyParams p;
    shape_params(p);
    return p;
  }

  int token_id(const std::string& word) const {
    for (std::size_t i = 0; i < config_.vocab.size(); ++i)
      if (config_.vocab[i] == word) return static_cast<int>(i);
    return static_cast<int>(config_.vocab.size());  // OOV row
  }

  // Runs the visual encoder once per frame, then one fusion/mask pass per
  // expression. Pass short_expr = nullptr for single-expression inference.
  ToyForward forward(const ToyParams& params, const std::vector<Image>& frames,
                     const TextExpression& long_expr,
                     const TextExpression* short_expr) const {
    using namespace toydetail;
    if (frames.empty()) throw std::invalid_argument("forward: no frames");
    const int H = frames[0].height(), W = frames[0].width();
    if (H % config_.feature_stride != 0 || W % config_.feature_stride != 0)
      throw std::invalid_argument(
          "forward: feature_stride must divide the frame size");

    ToyForward f;
    f.frames = static_cast<int>(frames.size());
    const int c = config_.feature_channels;
    const int h1 = conv_out(H, config_.stride1());
    const int w1 = conv_out(W, config_.stride1());
    f.feat_h = conv_out(h1, config_.stride2());
    f.feat_w = conv_out(w1, config_.stride2());

    for (const Image& img : frames) {
      if (img.height() != H || img.width() != W)
        throw std::invalid_argument("forward: inconsistent frame shapes");
      // Centered input keeps the tanh stack in its linear range early on.
      std::vector<double> in(static_cast<std::size_t>(3) * H * W);
      for (int ch = 0; ch < 3; ++ch)
        for (int y = 0; y < H; ++y)
          for (int x = 0; x < W; ++x)
            in[(static_cast<std::size_t>(ch) * H + y) * W + x] =
                2.0 * img(y, x, ch) - 1.0;

      ConvShape s1{3, c, H, W, h1, w1, config_.stride1()};
      std::vector<double> a1;
      conv_forward(params.conv1_w, params.conv1_b, in, a1, s1);
      std::vector<double> z1(a1.size());
      for (std::size_t i = 0; i < a1.size(); ++i) z1[i] = std::tanh(a1[i]);

      ConvShape s2{c, c, h1, w1, f.feat_h, f.feat_w, config_.stride2()};
      std::vector<double> a2;
      conv_forward(params.conv2_w, params.conv2_b, z1, a2, s2);
      FeatureMap feat(c, f.feat_h, f.feat_w);
      for (std::size_t i = 0; i < a2.size(); ++i)
        feat.values()[i] = std::tanh(a2[i]);

      f.input.push_back(std::move(in));
      f.act1_pre.push_back(std::move(a1));
      f.act1.push_back(std::move(z1));
      f.act2_pre.push_back(std::move(a2));
      f.features.push_back(std::move(feat));
      ++f.encoder_invocations;
    }

    run_branch(params, f, long_expr, f.long_branch);
    f.has_short = short_expr != nullptr;
    if (short_expr) run_branch(params, f, *short_expr, f.short_branch);

    for (int i = 0; i < config_.num_queries; ++i) {
      QuerySequencePrediction y;
      y.query_index = i;
      for (int t = 0; t < f.frames; ++t) {
        const auto& scores = f.long_branch.scores[i];
        double logit = 0.0;
        for (int ch = 0; ch < c; ++ch)
          logit += scores[ch] * f.long_branch.mask_pooled[i][t][ch];
        y.p.push_back(sigmoid(logit));
        y.mask_long.push_back(f.long_branch.masks[i][t]);
        if (f.has_short) y.mask_short.push_back(f.short_branch.masks[i][t]);
      }
      f.predictions.push_back(std::move(y));
    }
    return f;
  }

  // Exact reverse-mode gradients of the loss encoded in `grads` through
  // every parameter, including the consistency path into the encoder.
  ToyParams backward(const ToyParams& params, const ToyForward& f,
                     const OutputGrads& grads) const {
    using namespace toydetail;
    ToyParams g = zero_like();
    const int c = config_.feature_channels;
    const int hw = f.feat_h * f.feat_w;
    const int qi = grads.query;
    if (qi < 0 || qi >= config_.num_queries)
      throw std::invalid_argument("backward: bad query index");
    if (static_cast<int>(grads.mask_long.size()) != f.frames)
      throw std::invalid_argument("backward: stale cache or bad gradients");

    // Per-frame feature gradients accumulate from every head.
    std::vector<std::vector<double>> dfeat(
        f.frames, std::vector<double>(static_cast<std::size_t>(c) * hw, 0.0));
    if (!grads.features.empty()) {
      if (static_cast<int>(grads.features.size()) != f.frames)
        throw std::invalid_argument("backward: feature gradient count");
      for (int t = 0; t < f.frames; ++t)
        for (std::size_t i = 0; i < dfeat[t].size(); ++i)
          dfeat[t][i] += grads.features[t].values()[i];
    }

    backprop_branch(params, f, f.long_branch, qi, &grads.p, grads.mask_long,
                    g, dfeat);
    if (f.has_short) {
      if (grads.mask_short.empty())
        throw std::invalid_argument("backward: missing short-mask gradients");
      backprop_branch(params, f, f.short_branch, qi, nullptr, grads.mask_short,
                      g, dfeat);
    }

    // Through the convolution stack, shared by both branches.
    for (int t = 0; t < f.frames; ++t) {
      const int in_h = input_h(f), in_w = input_w(f);
      const int h1 = conv_out(in_h, config_.stride1());
      const int w1 = conv_out(in_w, config_.stride1());

      std::vector<double> da2(dfeat[t].size());
      for (std::size_t i = 0; i < da2.size(); ++i) {
        const double y = f.features[t].values()[i];
        da2[i] = dfeat[t][i] * (1.0 - y * y);
      }
      ConvShape s2{c, c, h1, w1, f.feat_h, f.feat_w, config_.stride2()};
      std::vector<double> dz1;
      conv_backward(params.conv2_w, f.act1[t], da2, g.conv2_w, g.conv2_b, dz1,
                    s2);

      for (std::size_t i = 0; i < dz1.size(); ++i) {
        const double y = f.act1[t][i];
        dz1[i] *= (1.0 - y * y);
      }
      ConvShape s1{3, c, in_h, in_w, h1, w1, config_.stride1()};
      std::vector<double> dinput;
      conv_backward(params.conv1_w, f.input[t], dz1, g.conv1_w, g.conv1_b,
                    dinput, s1);
    }
    return g;
  }

 private:
  int input_h(const ToyForward& f) const {
    return f.feat_h * config_.feature_stride;
  }
  int input_w(const ToyForward& f) const {
    return f.feat_w * config_.feature_stride;
  }

  void shape_params(ToyParams& p) const {
    const int c = config_.feature_channels;
    const int D = config_.hidden_dim;
    const int N = config_.num_queries;
    const int V = static_cast<int>(config_.vocab.size()) + 1;
    p.conv1_w.assign(static_cast<std::size_t>(c) * 3 * 3 * 3, 0.0);
    p.conv1_b.assign(c, 0.0);
    p.conv2_w.assign(static_cast<std::size_t>(c) * c * 3 * 3, 0.0);
    p.conv2_b.assign(c, 0.0);
    p.embed.assign(static_cast<std::size_t>(V) * D, 0.0);
    p.query.assign(static_cast<std::size_t>(N) * D, 0.0);
    p.fuse_w.assign(static_cast<std::size_t>(c) * (c + D), 0.0);
    p.fuse_b.assign(c, 0.0);
    p.qhead_w.assign(static_cast<std::size_t>(D) * 2 * D, 0.0);
    p.qhead_b.assign(D, 0.0);
    p.kernel_w.assign(static_cast<std::size_t>(c + 1) * D, 0.0);
    p.kernel_b.assign(c + 1, 0.0);
    p.score_w.assign(static_cast<std::size_t>(c) * D, 0.0);
    p.score_b.assign(c, 0.0);
  }

  int fan_in(const std::string& name) const {
    const int c = config_.feature_channels;
    const int D = config_.hidden_dim;
    if (name.rfind("conv1", 0) == 0) return 27;
    if (name.rfind("conv2", 0) == 0) return 9 * c;
    if (name.rfind("fuse", 0) == 0) return c + D;
    if (name.rfind("qhead", 0) == 0) return 2 * D;
    return D;  // embed, query, kernel, score
  }

  void run_branch(const ToyParams& params, ToyForward& f,
                  const TextExpression& expr, BranchCache& branch) const {
    using namespace toydetail;
    const int c = config_.feature_channels;
    const int D = config_.hidden_dim;
    const int hw = f.feat_h * f.feat_w;

    branch.token_ids.clear();
    for (const std::string& tok : expr.tokens)
      branch.token_ids.push_back(token_id(tok));
    if (branch.token_ids.empty())
      throw std::invalid_argument("forward: empty expression");

    branch.z.assign(D, 0.0);
    for (int id : branch.token_ids)
      for (int d = 0; d < D; ++d)
        branch.z[d] += params.embed[static_cast<std::size_t>(id) * D + d];
    for (double& v : branch.z)
      v /= static_cast<double>(branch.token_ids.size());

    branch.fused_pre.clear();
    branch.fused.clear();
    for (int t = 0; t < f.frames; ++t) {
      std::vector<double> pre(static_cast<std::size_t>(c) * hw);
      std::vector<double> act(pre.size());
      const auto& feat = f.features[t].values();
      for (int p = 0; p < hw; ++p) {
        for (int oc = 0; oc < c; ++oc) {
          double acc = params.fuse_b[oc];
          const std::size_t row = static_cast<std::size_t>(oc) * (c + D);
          for (int ic = 0; ic < c; ++ic)
            acc += params.fuse_w[row + ic] *
                   feat[static_cast<std::size_t>(ic) * hw + p];
          for (int d = 0; d < D; ++d)
            acc += params.fuse_w[row + c + d] * branch.z[d];
          const std::size_t at = static_cast<std::size_t>(oc) * hw + p;
          pre[at] = acc;
          act[at] = std::tanh(acc);
        }
      }
      branch.fused_pre.push_back(std::move(pre));
      branch.fused.push_back(std::move(act));
    }

    branch.head_pre.clear();
    branch.head.clear();
    branch.kernels.clear();
    branch.scores.clear();
    branch.masks.assign(config_.num_queries, {});
    branch.mask_pooled.assign(config_.num_queries, {});
    branch.mask_denom.assign(config_.num_queries, {});
    for (int i = 0; i < config_.num_queries; ++i) {
      std::vector<double> pre(D, 0.0), act(D);
      for (int r = 0; r < D; ++r) {
        double acc = params.qhead_b[r];
        const std::size_t row = static_cast<std::size_t>(r) * 2 * D;
        for (int d = 0; d < D; ++d) {
          acc += params.qhead_w[row + d] *
                 params.query[static_cast<std::size_t>(i) * D + d];
          acc += params.qhead_w[row + D + d] * branch.z[d];
        }
        pre[r] = acc;
        act[r] = std::tanh(acc);
      }

      std::vector<double> kernel(c + 1), score(c);
      for (int r = 0; r <= c; ++r) {
        double ka = params.kernel_b[r];
        const std::size_t row = static_cast<std::size_t>(r) * D;
        for (int d = 0; d < D; ++d) ka += params.kernel_w[row + d] * act[d];
        kernel[r] = ka;
      }
      for (int r = 0; r < c; ++r) {
        double sa = params.score_b[r];
        const std::size_t row = static_cast<std::size_t>(r) * D;
        for (int d = 0; d < D; ++d) sa += params.score_w[row + d] * act[d];
        score[r] = sa;
      }

      for (int t = 0; t < f.frames; ++t) {
        ProbMask m(f.feat_h, f.feat_w);
        const auto& fused = branch.fused[t];
        for (int p = 0; p < hw; ++p) {
          double logit = kernel[c];
          for (int ch = 0; ch < c; ++ch)
            logit += kernel[ch] * fused[static_cast<std::size_t>(ch) * hw + p];
          m.values()[p] = sigmoid(logit);
        }

        std::vector<double> pooled(c, 0.0);
        double denom = 1.0;
        for (int p = 0; p < hw; ++p) denom += m.values()[p];
        for (int ch = 0; ch < c; ++ch) {
          double acc = 0.0;
          for (int p = 0; p < hw; ++p)
            acc += m.values()[p] * fused[static_cast<std::size_t>(ch) * hw + p];
          pooled[ch] = acc / denom;
        }
        branch.mask_pooled[i].push_back(std::move(pooled));
        branch.mask_denom[i].push_back(denom);
        branch.masks[i].push_back(std::move(m));
      }

      branch.head_pre.push_back(std::move(pre));
      branch.head.push_back(std::move(act));
      branch.kernels.push_back(std::move(kernel));
      branch.scores.push_back(std::move(score));
    }
  }

  // Backprop through one expression branch for the selected query. p_grads
  // is null for the short branch, whose score head is unused.
  void backprop_branch(const ToyParams& params, const ToyForward& f,
                       const BranchCache& branch, int qi,
                       const std::vector<double>* p_grads,
                       const std::vector<ProbMask>& mask_grads, ToyParams& g,
                       std::vector<std::vector<double>>& dfeat) const {
    const int c = config_.feature_channels;
    const int D = config_.hidden_dim;
    const int hw = f.feat_h * f.feat_w;

    std::vector<double> dkernel(c + 1, 0.0), dscore(c, 0.0);
    std::vector<std::vector<double>> dfused(
        f.frames, std::vector<double>(static_cast<std::size_t>(c) * hw, 0.0));

    const auto& kernel = branch.kernels[qi];
    const auto& score = branch.scores[qi];

    // Upstream mask gradients, extended by the score head's dependence on
    // the query's own mask through the weighted pooling.
    std::vector<std::vector<double>> dmask(f.frames);
    for (int t = 0; t < f.frames; ++t) dmask[t] = mask_grads[t].values();

    if (p_grads) {
      for (int t = 0; t < f.frames; ++t) {
        const auto& pooled = branch.mask_pooled[qi][t];
        const double denom = branch.mask_denom[qi][t];
        const ProbMask& m = branch.masks[qi][t];
        const auto& fused = branch.fused[t];

        double logit = 0.0;
        for (int ch = 0; ch < c; ++ch) logit += score[ch] * pooled[ch];
        const double pv = toydetail::sigmoid(logit);
        const double dlogit = (*p_grads)[t] * pv * (1.0 - pv);
        if (dlogit == 0.0) continue;

        double ddenom = 0.0;
        for (int ch = 0; ch < c; ++ch) {
          dscore[ch] += dlogit * pooled[ch];
          const double dpool = dlogit * score[ch];
          ddenom -= dpool * pooled[ch] / denom;
          const double dnum = dpool / denom;
          for (int p = 0; p < hw; ++p) {
            dfused[t][static_cast<std::size_t>(ch) * hw + p] +=
                dnum * m.values()[p];
            dmask[t][p] += dnum * fused[static_cast<std::size_t>(ch) * hw + p];
          }
        }
        for (int p = 0; p < hw; ++p) dmask[t][p] += ddenom;
      }
    }

    for (int t = 0; t < f.frames; ++t) {
      // Mask head: sigmoid then 1x1 convolution by the query kernel.
      const ProbMask& m = branch.masks[qi][t];
      const auto& fused = branch.fused[t];
      for (int p = 0; p < hw; ++p) {
        const double mg = dmask[t][p];
        if (mg == 0.0) continue;
        const double s = m.values()[p];
        const double dlogit = mg * s * (1.0 - s);
        dkernel[c] += dlogit;
        for (int ch = 0; ch < c; ++ch) {
          dkernel[ch] += dlogit * fused[static_cast<std::size_t>(ch) * hw + p];
          dfused[t][static_cast<std::size_t>(ch) * hw + p] +=
              dlogit * kernel[ch];
        }
      }
    }

    // Query head chain: kernel/score -> hidden -> qhead weights, query
    // embedding and text embedding.
    std::vector<double> dz(D, 0.0);
    std::vector<double> dhead(D, 0.0);
    const auto& head = branch.head[qi];
    for (int r = 0; r <= c; ++r) {
      const std::size_t row = static_cast<std::size_t>(r) * D;
      if (dkernel[r] != 0.0) {
        g.kernel_b[r] += dkernel[r];
        for (int d = 0; d < D; ++d) {
          g.kernel_w[row + d] += dkernel[r] * head[d];
          dhead[d] += dkernel[r] * params.kernel_w[row + d];
        }
      }
    }
    for (int r = 0; r < c; ++r) {
      const std::size_t row = static_cast<std::size_t>(r) * D;
      if (dscore[r] != 0.0) {
        g.score_b[r] += dscore[r];
        for (int d = 0; d < D; ++d) {
          g.score_w[row + d] += dscore[r] * head[d];
          dhead[d] += dscore[r] * params.score_w[row + d];
        }
      }
    }
    for (int r = 0; r < D; ++r) {
      const double da = dhead[r] * (1.0 - head[r] * head[r]);
      if (da == 0.0) continue;
      g.qhead_b[r] += da;
      const std::size_t row = static_cast<std::size_t>(r) * 2 * D;
      for (int d = 0; d < D; ++d) {
        g.qhead_w[row + d] +=
            da * params.query[static_cast<std::size_t>(qi) * D + d];
        g.qhead_w[row + D + d] += da * branch.z[d];
        g.query[static_cast<std::size_t>(qi) * D + d] +=
            da * params.qhead_w[row + d];
        dz[d] += da * params.qhead_w[row + D + d];
      }
    }

    // Fusion chain: fused -> fuse weights, features and text embedding.
    for (int t = 0; t < f.frames; ++t) {
      const auto& feat = f.features[t].values();
      const auto& fused = branch.fused[t];
      for (int p = 0; p < hw; ++p)
        for (int oc = 0; oc < c; ++oc) {
          const std::size_t at = static_cast<std::size_t>(oc) * hw + p;
          const double df = dfused[t][at];
          if (df == 0.0) continue;
          const double da = df * (1.0 - fused[at] * fused[at]);
          g.fuse_b[oc] += da;
          const std::size_t row = static_cast<std::size_t>(oc) * (c + D);
          for (int ic = 0; ic < c; ++ic) {
            g.fuse_w[row + ic] +=
                da * feat[static_cast<std::size_t>(ic) * hw + p];
            dfeat[t][static_cast<std::size_t>(ic) * hw + p] +=
                da * params.fuse_w[row + ic];
          }
          for (int d = 0; d < D; ++d) {
            g.fuse_w[row + c + d] += da * branch.z[d];
            dz[d] += da * params.fuse_w[row + c + d];
          }
        }
    }

    // Mean pooling over token embeddings.
    const double inv_len = 1.0 / static_cast<double>(branch.token_ids.size());
    for (int id : branch.token_ids)
      for (int d = 0; d < D; ++d)
        g.embed[static_cast<std::size_t>(id) * D + d] += dz[d] * inv_len;
  }

  ToyConfig config_;
};

// ---------------------------------------------------------------------------
// Checkpoints: magic "LOSH", u32 version, then (u32 name length, name bytes,
// u32 element count, element count little-endian float64) records.
// ---------------------------------------------------------------------------

inline void write_checkpoint(const ToyParams& params, const ToyConfig& config,
                             const std::filesystem::path& path) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), {'L', 'O', 'S', 'H'});
  detail::put_u32(out, 1);

  auto put_record = [&out](const std::string& name,
                           const std::vector<double>& v) {
    detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    detail::put_u32(out, static_cast<std::uint32_t>(v.size()));
    for (double x : v) detail::put_f64(out, x);
  };

  put_record("config.num_queries", {static_cast<double>(config.num_queries)});
  put_record("config.hidden_dim", {static_cast<double>(config.hidden_dim)});
  put_record("config.feature_channels",
             {static_cast<double>(config.feature_channels)});
  put_record("config.feature_stride",
             {static_cast<double>(config.feature_stride)});
  put_record("config.vocab_size",
             {static_cast<double>(config.vocab.size())});
  params.for_each_tensor([&put_record](const char* name,
                                       const std::vector<double>& v) {
    put_record(name, v);
  });
  detail::write_file(path, out);
}

struct Checkpoint {
  ToyConfig config;
  ToyParams params;
};

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  detail::Reader r(detail::read_file(path));
  r.expect_magic("LOSH");
  const std::uint64_t ver_at = r.offset();
  if (r.u32() != 1) throw FormatError("unsupported checkpoint version", ver_at);

  std::map<std::string, std::vector<double>> records;
  while (!r.at_end()) {
    const std::uint64_t at = r.offset();
    std::uint32_t name_len = r.u32();
    if (name_len == 0 || name_len > 256)
      throw FormatError("implausible record name length", at);
    std::string name(name_len, '\0');
    r.raw(name.data(), name_len, "truncated record name");
    std::uint32_t count = r.u32();
    std::vector<double> v(count);
    for (std::uint32_t i = 0; i < count; ++i) v[i] = r.f64();
    records[name] = std::move(v);
  }

  auto scalar = [&records](const char* name) {
    auto it = records.find(name);
    if (it == records.end() || it->second.size() != 1)
      throw FormatError(std::string("missing config record ") + name, 0);
    return static_cast<int>(it->second[0]);
  };

  Checkpoint ck;
  ck.config.num_queries = scalar("config.num_queries");
  ck.config.hidden_dim = scalar("config.hidden_dim");
  ck.config.feature_channels = scalar("config.feature_channels");
  ck.config.feature_stride = scalar("config.feature_stride");
  const int vocab_size = scalar("config.vocab_size");
  if (vocab_size != static_cast<int>(ck.config.vocab.size()))
    throw FormatError("checkpoint vocabulary size mismatch", 0);
  ck.config.validate();

  ToyModel model(ck.config);
  ck.params = model.zero_like();
  ck.params.for_each_tensor([&records](const char* name,
                                       std::vector<double>& v) {
    auto it = records.find(name);
    if (it == records.end())
      throw FormatError(std::string("missing tensor record ") + name, 0);
    if (it->second.size() != v.size())
      throw FormatError(std::string("tensor size mismatch for ") + name, 0);
    v = it->second;
  });
  return ck;
}

}  // namespace losh
