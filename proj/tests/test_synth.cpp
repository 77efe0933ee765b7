#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <set>

#include "losh/synth.hpp"

using namespace losh;
namespace fs = std::filesystem;

namespace {

double mask_area(const BinaryMask& m) {
  double a = 0.0;
  for (auto v : m.values()) a += v;
  return a;
}

}  // namespace

TEST_CASE("generation is deterministic") {
  auto a = generate(7, 4, Difficulty::HARD);
  auto b = generate(7, 4, Difficulty::HARD);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].expression.long_expr.tokens == b[i].expression.long_expr.tokens);
    for (int t = 0; t < a[i].clip.frame_count(); ++t) {
      CHECK(a[i].clip.frames[t] == b[i].clip.frames[t]);
      CHECK(a[i].gt.masks[t]->values() == b[i].gt.masks[t]->values());
    }
  }
}

TEST_CASE("template expressions shorten to the subject phrase") {
  for (auto difficulty : {Difficulty::EASY, Difficulty::HARD}) {
    auto corpus = generate(11, 8, difficulty);
    for (const Sample& s : corpus) {
      CHECK_FALSE(s.expression.fallback);
      REQUIRE(s.expression.short_expr.tokens.size() == 3);
      // "a <color> <shape>" prefix of "a <color> <shape> is <motion...>"
      for (std::size_t i = 0; i < 3; ++i)
        CHECK(s.expression.short_expr.tokens[i] ==
              s.expression.long_expr.tokens[i]);
      CHECK(s.expression.long_expr.tokens[3] == "is");
    }
  }
}

TEST_CASE("rasterized target area is within 10% of the analytic area") {
  auto corpus = generate(23, 10, Difficulty::HARD);
  for (const Sample& s : corpus) {
    const InstanceSpec& target = s.scene.instances[s.scene.target_index];
    const double analytic = synthdetail::analytic_area(target);
    for (int k : s.scene.annotated_indices) {
      double area = mask_area(*s.gt.masks[k]);
      CHECK(std::fabs(area - analytic) <= 0.10 * analytic);
    }
  }
}

TEST_CASE("instance masks never overlap") {
  auto corpus = generate(31, 6, Difficulty::HARD);
  for (const Sample& s : corpus) {
    for (int t = 0; t < s.scene.frame_count; ++t) {
      BinaryMask sum(s.scene.height, s.scene.width, 0);
      for (const InstanceSpec& inst : s.scene.instances) {
        BinaryMask m = rasterize_mask(inst, t, s.scene.height, s.scene.width);
        for (std::size_t i = 0; i < m.values().size(); ++i) {
          CHECK((sum.values()[i] & m.values()[i]) == 0);
          sum.values()[i] |= m.values()[i];
        }
      }
    }
  }
}

TEST_CASE("expressions identify the target uniquely") {
  auto corpus = generate(43, 12, Difficulty::HARD);
  for (const Sample& s : corpus) {
    const InstanceSpec& target = s.scene.instances[s.scene.target_index];
    int appearance_matches = 0, full_matches = 0, motion_matches = 0;
    for (const InstanceSpec& inst : s.scene.instances) {
      const bool same_appearance =
          inst.color == target.color && inst.shape == target.shape;
      if (same_appearance) ++appearance_matches;
      if (same_appearance && inst.motion == target.motion) ++full_matches;
      if (inst.motion == target.motion) ++motion_matches;
    }
    // The short expression resolves by appearance alone; the long one by
    // appearance plus motion; the motion word alone is ambiguous.
    CHECK(appearance_matches == 1);
    CHECK(full_matches == 1);
    CHECK(motion_matches == 2);
  }
}

TEST_CASE("annotated frames are interior") {
  auto corpus = generate(3, 2, Difficulty::EASY, 64, 64, 9);
  for (const Sample& s : corpus) {
    CHECK_FALSE(s.scene.annotated_indices.empty());
    for (int k : s.scene.annotated_indices) {
      CHECK(k >= 2);
      CHECK(k <= s.scene.frame_count - 3);
    }
  }
  CHECK(corpus[0].scene.annotated_indices == std::vector<int>{2, 4, 6});

  auto tiny = generate(3, 1, Difficulty::EASY, 64, 64, 5);
  CHECK(tiny[0].scene.annotated_indices == std::vector<int>{2});
}

TEST_CASE("generate validates arguments") {
  CHECK_THROWS_AS(generate(1, 0, Difficulty::EASY), std::invalid_argument);
  CHECK_THROWS_AS(generate(1, 1, Difficulty::EASY, 64, 64, 3),
                  std::invalid_argument);
  CHECK_THROWS_AS(generate(1, 1, Difficulty::EASY, 16, 16), std::invalid_argument);
}

TEST_CASE("corpus round-trips through the directory layout") {
  fs::path root = fs::temp_directory_path() / "losh_synth_corpus";
  fs::remove_all(root);

  auto corpus = generate(17, 3, Difficulty::HARD);
  write_corpus(corpus, root);

  REQUIRE(fs::exists(root / "manifest.json"));
  REQUIRE(fs::exists(root / "000000" / "frames" / "0000.ppm"));
  REQUIRE(fs::exists(root / "000000" / "masks" / "0004.pgm"));

  auto loaded = load_corpus(root);
  REQUIRE(loaded.size() == corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    CHECK(loaded[i].id == corpus[i].id);
    CHECK(loaded[i].expression.long_expr.tokens ==
          corpus[i].expression.long_expr.tokens);
    CHECK(loaded[i].expression.short_expr.tokens ==
          corpus[i].expression.short_expr.tokens);
    CHECK(loaded[i].scene.annotated_indices ==
          corpus[i].scene.annotated_indices);
    for (int t = 0; t < corpus[i].clip.frame_count(); ++t) {
      CHECK(loaded[i].clip.frames[t] == corpus[i].clip.frames[t]);
      CHECK(loaded[i].gt.masks[t]->values() ==
            corpus[i].gt.masks[t]->values());
    }
  }
}

TEST_CASE("frames are static-background with moving target") {
  auto corpus = generate(29, 1, Difficulty::EASY);
  const Sample& s = corpus[0];
  const InstanceSpec& target = s.scene.instances[0];
  // The mask follows the velocity exactly.
  for (int t = 1; t < s.scene.frame_count; ++t) {
    BinaryMask m0 = rasterize_mask(target, t - 1, 64, 64);
    BinaryMask m1 = rasterize_mask(target, t, 64, 64);
    double a0 = mask_area(m0), a1 = mask_area(m1);
    CHECK(a0 == a1);
    if (target.vel_x != 0 || target.vel_y != 0) CHECK(m0.values() != m1.values());
  }
}
