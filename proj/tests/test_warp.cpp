#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "losh/gradcheck.hpp"
#include "losh/rng.hpp"
#include "losh/warp.hpp"

using namespace losh;

namespace {

FlowField constant_flow(int h, int w, double u, double v) {
  FlowField f(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      f.u(y, x) = u;
      f.v(y, x) = v;
    }
  return f;
}

FeatureMap random_features(RandomStream& rng, int c, int h, int w) {
  FeatureMap f(c, h, w);
  for (double& v : f.values()) v = rng.next_range(-1.0, 1.0);
  return f;
}

FlowField random_flow(RandomStream& rng, int h, int w, double mag) {
  FlowField f(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      f.u(y, x) = rng.next_range(-mag, mag);
      f.v(y, x) = rng.next_range(-mag, mag);
    }
  return f;
}

}  // namespace

TEST_CASE("downscale_flow rescales displacements into the small grid") {
  FlowField big = constant_flow(64, 64, 4.0, 0.0);
  FlowField small = downscale_flow(big, 16, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      CHECK_THAT(small.u(y, x), Catch::Matchers::WithinAbs(1.0, 1e-12));
      CHECK_THAT(small.v(y, x), Catch::Matchers::WithinAbs(0.0, 1e-12));
    }

  FlowField zeros(32, 48);
  FlowField z = downscale_flow(zeros, 8, 12);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 12; ++x) CHECK(z.u(y, x) == 0.0);

  FlowField same = downscale_flow(big, 64, 64);
  CHECK(same == big);

  CHECK_THROWS_AS(downscale_flow(big, 128, 16), std::invalid_argument);
}

TEST_CASE("warp with zero flow is the exact identity") {
  RandomStream rng(3, "warp-identity");
  FeatureMap f = random_features(rng, 4, 6, 7);
  FeatureMap out = warp(f, FlowField(6, 7));
  CHECK(out.values() == f.values());
}

TEST_CASE("warp of a linear ramp under unit flow") {
  FeatureMap f(1, 4, 5);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 5; ++x) f(0, y, x) = x;
  FeatureMap out = warp(f, constant_flow(4, 5, 1.0, 0.0));
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 5; ++x)
      CHECK_THAT(out(0, y, x),
                 Catch::Matchers::WithinAbs(std::min(x + 1, 4), 1e-12));
}

TEST_CASE("warp bilinear midpoint") {
  FeatureMap f(1, 1, 2);
  f(0, 0, 0) = 0.0;
  f(0, 0, 1) = 2.0;
  FeatureMap out = warp(f, constant_flow(1, 2, 0.5, 0.0));
  CHECK_THAT(out(0, 0, 0), Catch::Matchers::WithinAbs(1.0, 1e-12));
}

TEST_CASE("warp validates shapes") {
  FeatureMap f(1, 4, 4);
  CHECK_THROWS_AS(warp(f, FlowField(4, 5)), std::invalid_argument);
}

TEST_CASE("fbc_loss on a static clip is zero") {
  RandomStream rng(9, "fbc-static");
  FeatureMap f = random_features(rng, 3, 5, 5);
  std::vector<FeatureMap> features = {f, f, f, f, f};
  std::vector<NeighborFlow> flows;
  for (int t : {-2, -1, 1, 2}) {
    NeighborFlow nf;
    nf.t = t;
    nf.to_neighbor = FlowField(5, 5);
    nf.from_neighbor = FlowField(5, 5);
    nf.has_from = true;
    flows.push_back(nf);
  }
  for (auto mode : {ConsistencyMode::FORWARD_BACKWARD, ConsistencyMode::OPPOSITE,
                    ConsistencyMode::MUTUAL}) {
    FbcResult r = fbc_loss(features, 2, flows, mode);
    CHECK(r.loss == 0.0);
    for (const auto& [frame, grad] : r.feature_grads)
      for (double g : grad.values()) CHECK(g == 0.0);
  }
}

TEST_CASE("fbc_loss single-element cases") {
  // 1x1x1 features: anchor 1, neighbor 3 -> one term of norm 2.
  std::vector<FeatureMap> features(2, FeatureMap(1, 1, 1));
  features[0](0, 0, 0) = 1.0;
  features[1](0, 0, 0) = 3.0;
  NeighborFlow nf;
  nf.t = 1;
  nf.to_neighbor = FlowField(1, 1);
  FbcResult r = fbc_loss(features, 0, {nf}, ConsistencyMode::FORWARD_BACKWARD);
  CHECK_THAT(r.loss, Catch::Matchers::WithinAbs(2.0, 1e-12));

  // Two neighbors with difference norms 2 and 5 -> loss 7.
  std::vector<FeatureMap> tri(3, FeatureMap(1, 1, 1));
  tri[1](0, 0, 0) = 1.0;  // anchor
  tri[0](0, 0, 0) = 3.0;  // |3-1| = 2
  tri[2](0, 0, 0) = 6.0;  // |6-1| = 5
  NeighborFlow prev;
  prev.t = -1;
  prev.to_neighbor = FlowField(1, 1);
  NeighborFlow next;
  next.t = 1;
  next.to_neighbor = FlowField(1, 1);
  FbcResult r2 =
      fbc_loss(tri, 1, {prev, next}, ConsistencyMode::FORWARD_BACKWARD);
  CHECK_THAT(r2.loss, Catch::Matchers::WithinAbs(7.0, 1e-12));
}

TEST_CASE("fbc_loss with no neighbors is zero") {
  std::vector<FeatureMap> features = {FeatureMap(2, 3, 3, 1.0)};
  FbcResult r = fbc_loss(features, 0, {}, ConsistencyMode::FORWARD_BACKWARD);
  CHECK(r.loss == 0.0);
  CHECK(r.feature_grads.empty());
}

TEST_CASE("mutual loss equals forward-backward plus opposite exactly") {
  RandomStream rng(21, "fbc-mutual");
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<FeatureMap> features;
    for (int i = 0; i < 5; ++i)
      features.push_back(random_features(rng, 3, 6, 6));
    std::vector<NeighborFlow> flows;
    for (int t : {-2, -1, 1, 2}) {
      NeighborFlow nf;
      nf.t = t;
      nf.to_neighbor = random_flow(rng, 6, 6, 1.5);
      nf.from_neighbor = random_flow(rng, 6, 6, 1.5);
      nf.has_from = true;
      flows.push_back(nf);
    }
    double fb = fbc_loss(features, 2, flows, ConsistencyMode::FORWARD_BACKWARD).loss;
    double op = fbc_loss(features, 2, flows, ConsistencyMode::OPPOSITE).loss;
    double mu = fbc_loss(features, 2, flows, ConsistencyMode::MUTUAL).loss;
    CHECK(mu == fb + op);
    CHECK(fb >= 0.0);
    CHECK(op >= 0.0);
  }
}

TEST_CASE("fbc_loss gradients match central finite differences") {
  RandomStream rng(42, "fbc-gradcheck");
  for (auto mode : {ConsistencyMode::FORWARD_BACKWARD, ConsistencyMode::OPPOSITE,
                    ConsistencyMode::MUTUAL}) {
    for (int trial = 0; trial < 5; ++trial) {
      std::vector<FeatureMap> features;
      for (int i = 0; i < 3; ++i)
        features.push_back(random_features(rng, 3, 6, 6));
      std::vector<NeighborFlow> flows;
      for (int t : {-1, 1}) {
        NeighborFlow nf;
        nf.t = t;
        nf.to_neighbor = random_flow(rng, 6, 6, 1.5);
        nf.from_neighbor = random_flow(rng, 6, 6, 1.5);
        nf.has_from = true;
        flows.push_back(nf);
      }
      FbcResult r = fbc_loss(features, 1, flows, mode);
      GradReport report;
      for (int frame = 0; frame < 3; ++frame) {
        const FeatureMap* grad = r.grad_for(frame);
        REQUIRE(grad != nullptr);
        for (std::size_t i = 0; i < features[frame].size(); i += 7) {
          double numeric = central_difference(
              features[frame].values()[i],
              [&] { return fbc_loss(features, 1, flows, mode).loss; });
          report.record("f" + std::to_string(frame) + "[" + std::to_string(i) +
                            "]",
                        grad->values()[i], numeric);
        }
      }
      INFO("mode " << static_cast<int>(mode) << " worst " << report.worst
                   << " at " << report.worst_name);
      CHECK(report.ok(1e-4));
    }
  }
}

TEST_CASE("normalized fbc divides each norm by sqrt(chw)") {
  std::vector<FeatureMap> features(2, FeatureMap(2, 3, 4, 0.0));
  for (double& v : features[1].values()) v = 1.0;
  NeighborFlow nf;
  nf.t = 1;
  nf.to_neighbor = FlowField(3, 4);
  double plain =
      fbc_loss(features, 0, {nf}, ConsistencyMode::FORWARD_BACKWARD).loss;
  double normed =
      fbc_loss(features, 0, {nf}, ConsistencyMode::FORWARD_BACKWARD, true).loss;
  CHECK_THAT(plain, Catch::Matchers::WithinAbs(std::sqrt(24.0), 1e-12));
  CHECK_THAT(normed, Catch::Matchers::WithinAbs(1.0, 1e-12));
}
