#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "losh/metrics.hpp"
#include "losh/rng.hpp"
#include "oracles.hpp"

using namespace losh;

namespace {

// One-frame record with the requested intersection/union counts realized
// as stripes on a 1 x n grid.
EvalRecord stripe_record(const std::string& id, int inter, int uni,
                         double confidence) {
  // gt occupies [0, inter + (uni - inter)/2...]: build pred [0, a), gt
  // [a - inter, a - inter + b) with a = pred size, giving I=inter, U=uni.
  const int pred_size = inter + (uni - inter);  // pred alone spans the union
  // Simpler: pred = [0, uni), gt = [0, inter): I = inter, U = uni.
  const int n = std::max(uni, 1) + 2;
  EvalRecord r;
  r.sample_id = id;
  BinaryMask pred(1, n, 0), gt(1, n, 0);
  for (int i = 0; i < uni; ++i) pred(0, i) = 1;
  for (int i = 0; i < inter; ++i) gt(0, i) = 1;
  r.predictions = {pred};
  r.ground_truth = {gt};
  r.confidence = confidence;
  (void)pred_size;
  return r;
}

// Record with a single frame of the given IoU via stripes.
EvalRecord iou_record(const std::string& id, double iou, double confidence,
                      int denom = 100) {
  int inter = static_cast<int>(std::lround(iou * denom));
  return stripe_record(id, inter, denom, confidence);
}

BinaryMask square_mask(int size, int y0, int x0, int side) {
  BinaryMask m(size, size, 0);
  for (int y = y0; y < y0 + side; ++y)
    for (int x = x0; x < x0 + side; ++x) m(y, x) = 1;
  return m;
}

}  // namespace

TEST_CASE("precision_at_k hand case") {
  std::vector<EvalRecord> records = {iou_record("a", 0.55, 0.9),
                                     iou_record("b", 0.45, 0.8),
                                     iou_record("c", 0.72, 0.7)};
  auto p = precision_at_k(records);
  REQUIRE(p.size() == 5);
  CHECK_THAT(p[0].second, Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-12));  // @0.5
  CHECK_THAT(p[2].second, Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-12));  // @0.7
}

TEST_CASE("precision_at_k degenerate cases") {
  std::vector<EvalRecord> perfect = {iou_record("a", 1.0, 0.9),
                                     iou_record("b", 1.0, 0.8)};
  for (auto [k, v] : precision_at_k(perfect)) CHECK(v == 1.0);

  std::vector<EvalRecord> empty_preds = {stripe_record("a", 0, 10, 0.5)};
  for (auto [k, v] : precision_at_k(empty_preds)) CHECK(v == 0.0);

  CHECK_THROWS_AS(precision_at_k({}), std::invalid_argument);
}

TEST_CASE("precision_at_k is monotone in K") {
  RandomStream rng(3, "pak-monotone");
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<EvalRecord> records;
    int n = rng.next_int(1, 12);
    for (int i = 0; i < n; ++i)
      records.push_back(iou_record("s" + std::to_string(i),
                                   rng.next_unit(), rng.next_unit()));
    auto p = precision_at_k(records);
    for (std::size_t i = 1; i < p.size(); ++i) CHECK(p[i - 1].second >= p[i].second);
  }
}

TEST_CASE("overall and mean IoU hand case") {
  // Frames with (I=3,U=4) and (I=1,U=2).
  EvalRecord r1 = stripe_record("a", 3, 4, 0.9);
  EvalRecord r2 = stripe_record("b", 1, 2, 0.8);
  auto [overall, mean] = overall_and_mean_iou({r1, r2});
  CHECK_THAT(overall, Catch::Matchers::WithinAbs(4.0 / 6.0, 1e-12));
  CHECK_THAT(mean, Catch::Matchers::WithinAbs(0.625, 1e-12));
}

TEST_CASE("overall and mean IoU degenerate cases") {
  EvalRecord same = iou_record("a", 1.0, 0.9);
  auto [o1, m1] = overall_and_mean_iou({same});
  CHECK(o1 == 1.0);
  CHECK(m1 == 1.0);

  // Disjoint prediction and ground truth.
  EvalRecord disjoint;
  disjoint.sample_id = "d";
  BinaryMask pred(1, 8, 0), gt(1, 8, 0);
  pred(0, 0) = 1;
  gt(0, 7) = 1;
  disjoint.predictions = {pred};
  disjoint.ground_truth = {gt};
  auto [o2, m2] = overall_and_mean_iou({disjoint});
  CHECK(o2 == 0.0);
  CHECK(m2 == 0.0);

  // Empty against empty counts as IoU 1 in the mean.
  EvalRecord both_empty;
  both_empty.sample_id = "e";
  both_empty.predictions = {BinaryMask(2, 2, 0)};
  both_empty.ground_truth = {BinaryMask(2, 2, 0)};
  auto [o3, m3] = overall_and_mean_iou({both_empty});
  CHECK(m3 == 1.0);
  (void)o3;
}

TEST_CASE("mean_ap hand case") {
  // IoUs (0.9, 0.55) with confidences (0.9, 0.8):
  // theta <= 0.55 -> AP 1 (x2); 0.60..0.90 -> AP 0.5 (x7); 0.95 -> 0.
  std::vector<EvalRecord> records = {iou_record("a", 0.9, 0.9, 20),
                                     iou_record("b", 0.55, 0.8, 20)};
  CHECK_THAT(mean_ap(records), Catch::Matchers::WithinAbs(0.55, 1e-12));

  std::vector<EvalRecord> all_hit = {iou_record("a", 1.0, 0.5),
                                     iou_record("b", 1.0, 0.6)};
  CHECK(mean_ap(all_hit) == 1.0);

  std::vector<EvalRecord> all_miss = {stripe_record("a", 0, 5, 0.5)};
  CHECK(mean_ap(all_miss) == 0.0);
}

TEST_CASE("mean_ap equals the brute-force oracle on random sets") {
  RandomStream rng(51, "map-oracle");
  for (int trial = 0; trial < 100; ++trial) {
    int n = rng.next_int(1, 10);
    std::vector<EvalRecord> records;
    std::vector<double> ious, confs;
    for (int i = 0; i < n; ++i) {
      // Quantize IoU to the stripe resolution so both sides see the same value.
      double iou = rng.next_int(0, 40) / 40.0;
      double conf = rng.next_unit();
      records.push_back(iou_record("s" + std::to_string(i), iou, conf, 40));
      ious.push_back(iou);
      confs.push_back(conf);
    }
    double lib = mean_ap(records);
    double ora = oracle::mean_ap(ious, confs);
    CHECK_THAT(lib, Catch::Matchers::WithinAbs(ora, 1e-12));
  }
}

TEST_CASE("mean_ap is invariant to record order") {
  std::vector<EvalRecord> records = {iou_record("a", 0.9, 0.9, 20),
                                     iou_record("b", 0.55, 0.8, 20),
                                     iou_record("c", 0.7, 0.3, 20)};
  double base = mean_ap(records);
  std::swap(records[0], records[2]);
  CHECK_THAT(mean_ap(records), Catch::Matchers::WithinAbs(base, 1e-12));
}

TEST_CASE("j_and_f on identical masks") {
  EvalRecord r;
  r.sample_id = "a";
  BinaryMask m = square_mask(32, 8, 8, 12);
  r.predictions = {m};
  r.ground_truth = {m};
  auto [j, f] = j_and_f({r});
  CHECK(j == 1.0);
  CHECK(f == 1.0);
}

TEST_CASE("one-pixel shift keeps F at 1 while J drops") {
  EvalRecord r;
  r.sample_id = "a";
  r.ground_truth = {square_mask(64, 20, 20, 24)};
  r.predictions = {square_mask(64, 20, 21, 24)};
  auto [j, f] = j_and_f({r});
  CHECK(j < 1.0);
  CHECK(f == 1.0);  // tolerance radius >= 1 absorbs the shift
}

TEST_CASE("far-apart masks score F = 0") {
  EvalRecord r;
  r.sample_id = "a";
  r.ground_truth = {square_mask(64, 2, 2, 6)};
  r.predictions = {square_mask(64, 50, 50, 6)};
  auto [j, f] = j_and_f({r});
  CHECK(j == 0.0);
  CHECK(f == 0.0);
}

TEST_CASE("empty boundaries contribute F = 1") {
  EvalRecord r;
  r.sample_id = "a";
  r.predictions = {BinaryMask(8, 8, 0)};
  r.ground_truth = {BinaryMask(8, 8, 0)};
  auto [j, f] = j_and_f({r});
  CHECK(f == 1.0);
  CHECK(j == 1.0);
}

TEST_CASE("metric report serializes with six fractional digits") {
  std::vector<EvalRecord> records = {iou_record("a", 0.55, 0.9),
                                     iou_record("b", 0.45, 0.8),
                                     iou_record("c", 0.72, 0.7)};
  MetricReport report = compute_metrics(records);
  std::string json = to_json(report);
  CHECK(json.find("\"precision_at\"") != std::string::npos);
  CHECK(json.find("\"0.5\": 0.666667") != std::string::npos);
  CHECK(json.find("\"overall_iou\"") != std::string::npos);
  CHECK(json.find("\"map\"") != std::string::npos);
  CHECK(json.find("\"j_mean\"") != std::string::npos);
  CHECK(json.find("\"f_mean\"") != std::string::npos);
}
