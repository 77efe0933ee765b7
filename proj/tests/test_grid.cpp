#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "losh/grid.hpp"
#include "losh/io.hpp"
#include "losh/rng.hpp"

using namespace losh;
namespace fs = std::filesystem;

namespace {

ProbMask make_mask(std::initializer_list<std::initializer_list<double>> rows) {
  int h = static_cast<int>(rows.size());
  int w = static_cast<int>(rows.begin()->size());
  ProbMask m(h, w);
  int y = 0;
  for (const auto& row : rows) {
    int x = 0;
    for (double v : row) m(y, x++) = v;
    ++y;
  }
  return m;
}

ProbMask random_mask(RandomStream& rng, int h, int w, bool f32_exact = false) {
  ProbMask m(h, w);
  for (double& v : m.values()) {
    v = rng.next_unit();
    if (f32_exact) v = static_cast<double>(static_cast<float>(v));
  }
  return m;
}

fs::path temp_dir() {
  fs::path dir = fs::temp_directory_path() / "losh_grid_test";
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("threshold_filter keeps supra-threshold probabilities") {
  ProbMask zeros(4, 4, 0.0);
  CHECK(threshold_filter(zeros, 0.5) == zeros);

  ProbMask m = make_mask({{0.8, 0.6}, {0.2, 0.9}});
  ProbMask expect = make_mask({{0.8, 0.6}, {0.0, 0.9}});
  CHECK(threshold_filter(m, 0.5) == expect);

  CHECK(threshold_filter(m, 0.0) == m);

  // Comparison is inclusive: values exactly at tau survive.
  ProbMask at = make_mask({{0.5}});
  CHECK(threshold_filter(at, 0.5)(0, 0) == 0.5);
}

TEST_CASE("threshold_filter is idempotent") {
  RandomStream rng(7, "threshold-idem");
  for (int trial = 0; trial < 50; ++trial) {
    ProbMask m = random_mask(rng, rng.next_int(1, 8), rng.next_int(1, 8));
    double tau = rng.next_unit();
    ProbMask once = threshold_filter(m, tau);
    CHECK(threshold_filter(once, tau) == once);
  }
}

TEST_CASE("soft_area") {
  CHECK(soft_area(ProbMask(4, 4, 0.0)) == 0.0);
  CHECK(soft_area(ProbMask(4, 4, 1.0)) == 16.0);
  CHECK_THAT(soft_area(make_mask({{0.8, 0.6}, {0.0, 0.9}})),
             Catch::Matchers::WithinAbs(2.3, 1e-12));
}

TEST_CASE("soft_intersection") {
  ProbMask ones(2, 2, 1.0);
  CHECK(soft_intersection(ones, ones) == 4.0);

  RandomStream rng(3, "intersect-zero");
  ProbMask any = random_mask(rng, 5, 3);
  CHECK(soft_intersection(any, ProbMask(5, 3, 0.0)) == 0.0);

  ProbMask a = make_mask({{0.8, 0.6}, {0.0, 0.9}});
  ProbMask b = make_mask({{0.9, 0.0}, {0.7, 0.6}});
  CHECK_THAT(soft_intersection(a, b), Catch::Matchers::WithinAbs(1.26, 1e-12));
  CHECK(soft_intersection(a, b) == soft_intersection(b, a));

  CHECK_THROWS_AS(soft_intersection(a, ProbMask(3, 3, 0.0)),
                  std::invalid_argument);
}

TEST_CASE("soft measures agree with pixel counts on binary masks") {
  RandomStream rng(11, "binary-agreement");
  for (int trial = 0; trial < 30; ++trial) {
    int h = rng.next_int(1, 10), w = rng.next_int(1, 10);
    BinaryMask a(h, w), b(h, w);
    int both = 0, in_a = 0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        a(y, x) = rng.next_bool() ? 1 : 0;
        b(y, x) = rng.next_bool() ? 1 : 0;
        in_a += a(y, x);
        both += a(y, x) & b(y, x);
      }
    CHECK(soft_area(to_prob(a)) == static_cast<double>(in_a));
    CHECK(soft_intersection(to_prob(a), to_prob(b)) ==
          static_cast<double>(both));
  }
}

TEST_CASE("soft_intersection bounded by soft_area") {
  RandomStream rng(13, "intersect-bound");
  for (int trial = 0; trial < 30; ++trial) {
    int h = rng.next_int(1, 8), w = rng.next_int(1, 8);
    ProbMask a = random_mask(rng, h, w), b = random_mask(rng, h, w);
    CHECK(soft_intersection(a, b) <= soft_area(a) + 1e-12);
    CHECK(soft_intersection(a, b) <= soft_area(b) + 1e-12);
  }
}

TEST_CASE("probability mask file round trip") {
  fs::path dir = temp_dir();
  RandomStream rng(5, "mask-roundtrip");
  for (int trial = 0; trial < 10; ++trial) {
    ProbMask m =
        random_mask(rng, rng.next_int(1, 9), rng.next_int(1, 9), true);
    fs::path p = dir / "m.lprb";
    write_mask(m, p);
    CHECK(read_mask(p) == m);

    // Re-writing the read value reproduces the file byte for byte.
    fs::path q = dir / "m2.lprb";
    write_mask(read_mask(p), q);
    CHECK(detail::read_file(p) == detail::read_file(q));
  }
}

TEST_CASE("flow field file round trip") {
  fs::path dir = temp_dir();
  FlowField f(3, 2);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 2; ++x) {
      f.u(y, x) = 1.5;
      f.v(y, x) = -0.25;
    }
  fs::path p = dir / "f.lflo";
  write_flow(f, p);
  FlowField g = read_flow(p);
  CHECK(g == f);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 2; ++x) CHECK(g.u(y, x) == 1.5);
}

TEST_CASE("frame and binary mask round trips") {
  fs::path dir = temp_dir();
  RandomStream rng(17, "frame-roundtrip");
  Image img(6, 5);
  for (double& v : img.values())
    v = rng.next_int(0, 255) / 255.0;
  fs::path p = dir / "frame.ppm";
  write_frame(img, p);
  CHECK(read_frame(p) == img);

  BinaryMask m(4, 7);
  for (auto& v : m.values()) v = rng.next_bool() ? 1 : 0;
  fs::path q = dir / "mask.pgm";
  write_binary_mask(m, q);
  CHECK(read_binary_mask(q) == m);
}

TEST_CASE("format errors carry byte offsets") {
  fs::path dir = temp_dir();

  fs::path bad_magic = dir / "bad_magic.lprb";
  {
    std::ofstream out(bad_magic, std::ios::binary);
    out << "XPRB" << std::string(12, '\0');
  }
  CHECK_THROWS_AS(read_mask(bad_magic), FormatError);

  ProbMask m(2, 2, 0.5);
  fs::path truncated = dir / "trunc.lprb";
  write_mask(m, truncated);
  {
    auto bytes = detail::read_file(truncated);
    bytes.resize(bytes.size() - 6);
    detail::write_file(truncated, bytes);
  }
  try {
    read_mask(truncated);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.byte_offset() == 16 + 2 * 4);  // header + first two floats
  }

  // Out-of-range probability in the payload.
  fs::path out_of_range = dir / "range.lprb";
  {
    std::vector<std::uint8_t> bytes;
    bytes.insert(bytes.end(), {'L', 'P', 'R', 'B'});
    detail::put_u32(bytes, 1);
    detail::put_u32(bytes, 1);
    detail::put_u32(bytes, 0);
    detail::put_f32(bytes, 1.5f);
    detail::write_file(out_of_range, bytes);
  }
  try {
    read_mask(out_of_range);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.byte_offset() == 16);
  }
}

TEST_CASE("grayscale conversion uses luma weights") {
  Image img(1, 1);
  img(0, 0, 0) = 1.0;
  img(0, 0, 1) = 0.5;
  img(0, 0, 2) = 0.25;
  GrayImage g = to_gray(img);
  CHECK_THAT(g(0, 0), Catch::Matchers::WithinAbs(
                          0.299 * 1.0 + 0.587 * 0.5 + 0.114 * 0.25, 1e-15));
}

TEST_CASE("nearest-neighbor resize keeps binary masks binary") {
  BinaryMask m(8, 8, 0);
  for (int y = 2; y < 6; ++y)
    for (int x = 2; x < 6; ++x) m(y, x) = 1;
  BinaryMask small = resize_nearest(m, 4, 4);
  for (auto v : small.values()) CHECK((v == 0 || v == 1));
  CHECK(small(1, 1) == 1);
  CHECK(small(0, 0) == 0);
}
