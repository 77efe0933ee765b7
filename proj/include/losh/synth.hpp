#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "losh/grid.hpp"
#include "losh/io.hpp"
#include "losh/matching.hpp"
#include "losh/rng.hpp"
#include "losh/text.hpp"

namespace losh {

enum class Shape { SQUARE, CIRCLE, TRIANGLE };
enum class Difficulty { EASY, HARD };

inline const char* to_string(Shape s) {
  switch (s) {
    case Shape::SQUARE: return "square";
    case Shape::CIRCLE: return "circle";
    case Shape::TRIANGLE: return "triangle";
  }
  return "square";
}

inline Shape shape_from_string(const std::string& s) {
  if (s == "square") return Shape::SQUARE;
  if (s == "circle") return Shape::CIRCLE;
  if (s == "triangle") return Shape::TRIANGLE;
  throw std::invalid_argument("unknown shape: " + s);
}

struct PaletteColor {
  const char* name;
  double r, g, b;
};

// Six saturated colors, fixed 8-bit values so frames round-trip exactly.
inline const std::array<PaletteColor, 6>& palette() {
  static const std::array<PaletteColor, 6> p = {{
      {"red", 220 / 255.0, 40 / 255.0, 40 / 255.0},
      {"green", 40 / 255.0, 180 / 255.0, 60 / 255.0},
      {"blue", 50 / 255.0, 90 / 255.0, 220 / 255.0},
      {"yellow", 230 / 255.0, 220 / 255.0, 50 / 255.0},
      {"purple", 160 / 255.0, 60 / 255.0, 200 / 255.0},
      {"orange", 240 / 255.0, 140 / 255.0, 40 / 255.0},
  }};
  return p;
}

inline int palette_index(const std::string& name) {
  for (std::size_t i = 0; i < palette().size(); ++i)
    if (name == palette()[i].name) return static_cast<int>(i);
  throw std::invalid_argument("unknown color: " + name);
}

// One moving shape: integer start position and per-frame velocity, so
// every frame's center is exact.
struct InstanceSpec {
  Shape shape = Shape::SQUARE;
  int color = 0;  // palette index
  int size = 14;  // even, pixels
  int start_x = 0, start_y = 0;
  int vel_x = 0, vel_y = 0;
  std::string motion = "still";

  int center_x(int t) const { return start_x + vel_x * t; }
  int center_y(int t) const { return start_y + vel_y * t; }

  // Circumradius for conservative disjointness checks.
  double reach() const {
    switch (shape) {
      case Shape::CIRCLE: return size / 2.0;
      default: return size * 0.7072;
    }
  }
};

struct SceneSpec {
  int height = 64, width = 64;
  int frame_count = 5;
  std::vector<InstanceSpec> instances;
  int target_index = 0;
  std::vector<int> annotated_indices;
  std::uint64_t background_seed = 0;
};

struct Sample {
  std::string id;
  VideoClip clip;
  GroundTruthSequence gt;
  LongShortPair expression;
  SceneSpec scene;
};

namespace synthdetail {

// Pixel-center containment with half-open right/bottom bounds where the
// shape edge is axis-aligned, keeping rasterized areas at their analytic
// values (size^2, pi r^2, size^2/2).
inline bool contains(const InstanceSpec& inst, int t, int px, int py) {
  const double cx = inst.center_x(t), cy = inst.center_y(t);
  const double h = inst.size / 2.0;
  switch (inst.shape) {
    case Shape::SQUARE:
      return px >= cx - h && px < cx + h && py >= cy - h && py < cy + h;
    case Shape::CIRCLE: {
      const double dx = px - cx, dy = py - cy;
      return dx * dx + dy * dy <= h * h;
    }
    case Shape::TRIANGLE: {
      // Apex up, base at the bottom; rows span [cy-h, cy+h).
      if (py < cy - h || py >= cy + h) return false;
      const double hw = (py - (cy - h)) * 0.5;
      return px >= cx - hw && px <= cx + hw;
    }
  }
  return false;
}

inline double analytic_area(const InstanceSpec& inst) {
  const double s = inst.size;
  switch (inst.shape) {
    case Shape::SQUARE: return s * s;
    case Shape::CIRCLE: return 3.14159265358979323846 * (s / 2.0) * (s / 2.0);
    case Shape::TRIANGLE: return s * s / 2.0;
  }
  return 0.0;
}

struct MotionWord {
  const char* word;
  int dx, dy;  // unit direction
};

inline const std::array<MotionWord, 5>& motions() {
  static const std::array<MotionWord, 5> m = {{
      {"moving left", -1, 0},
      {"moving right", 1, 0},
      {"moving up", 0, -1},
      {"moving down", 0, 1},
      {"still", 0, 0},
  }};
  return m;
}

inline bool inside_canvas(const InstanceSpec& inst, int t, int h, int w) {
  const double half = inst.size / 2.0;
  const double cx = inst.center_x(t), cy = inst.center_y(t);
  return cx - half >= 1.0 && cx + half <= w - 2.0 && cy - half >= 1.0 &&
         cy + half <= h - 2.0;
}

inline bool trajectories_disjoint(const InstanceSpec& a, const InstanceSpec& b,
                                  int frames) {
  for (int t = 0; t < frames; ++t) {
    const double dx = a.center_x(t) - b.center_x(t);
    const double dy = a.center_y(t) - b.center_y(t);
    if (std::hypot(dx, dy) < a.reach() + b.reach() + 2.0) return false;
  }
  return true;
}

}  // namespace synthdetail

inline BinaryMask rasterize_mask(const InstanceSpec& inst, int t, int height,
                                 int width) {
  BinaryMask m(height, width, 0);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      if (synthdetail::contains(inst, t, x, y)) m(y, x) = 1;
  return m;
}

// Static noise background with flat-colored instances on top. All values
// are exact 8-bit levels.
inline Image render_frame(const SceneSpec& scene, int t) {
  Image img(scene.height, scene.width);
  RandomStream bg(scene.background_seed, "background");
  for (int y = 0; y < scene.height; ++y)
    for (int x = 0; x < scene.width; ++x) {
      const double g = bg.next_int(64, 192) / 255.0;
      img(y, x, 0) = img(y, x, 1) = img(y, x, 2) = g;
    }
  for (const InstanceSpec& inst : scene.instances) {
    const PaletteColor& c = palette()[inst.color];
    for (int y = 0; y < scene.height; ++y)
      for (int x = 0; x < scene.width; ++x)
        if (synthdetail::contains(inst, t, x, y)) {
          img(y, x, 0) = c.r;
          img(y, x, 1) = c.g;
          img(y, x, 2) = c.b;
        }
  }
  return img;
}

inline std::vector<int> annotated_frames(int frame_count) {
  // Interior frames have both +/-2 neighbors; annotate the middle one and
  // the first and last interior ones.
  std::vector<int> out;
  const int first = 2, last = frame_count - 3;
  const int mid = frame_count / 2;
  for (int k : {first, mid, last})
    if (std::find(out.begin(), out.end(), k) == out.end()) out.push_back(k);
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<std::string> motion_tokens(const std::string& motion) {
  std::vector<std::string> toks;
  std::string word;
  for (char c : motion) {
    if (c == ' ') {
      toks.push_back(word);
      word.clear();
    } else {
      word += c;
    }
  }
  toks.push_back(word);
  return toks;
}

// Deterministic corpus of moving-shape clips with template expressions.
// Easy scenes hold two instances differing in color, shape and motion.
// Hard scenes add a distractor sharing the target's motion word (different
// appearance) and one sharing its color (different shape and motion).
inline std::vector<Sample> generate(std::uint64_t seed, int count,
                                    Difficulty difficulty, int height = 64,
                                    int width = 64, int frame_count = 5) {
  if (count < 1) throw std::invalid_argument("generate: count must be >= 1");
  if (frame_count < 5)
    throw std::invalid_argument(
        "generate: frame_count must be >= 5 so interior frames have +/-2 "
        "neighbors");
  if (height < 48 || width < 48)
    throw std::invalid_argument("generate: canvas must be at least 48x48");

  using namespace synthdetail;
  std::vector<Sample> corpus;
  const Lexicon lex = Lexicon::builtin();

  for (int index = 0; index < count; ++index) {
    RandomStream rng(seed, stream_label("sample", index));

    SceneSpec scene;
    scene.height = height;
    scene.width = width;
    scene.frame_count = frame_count;
    scene.background_seed =
        RandomStream(seed, stream_label("background", index)).next_u64();
    scene.annotated_indices = annotated_frames(frame_count);
    scene.target_index = 0;

    const int num_instances = difficulty == Difficulty::EASY ? 2 : 3;
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      scene.instances.clear();

      // Appearance and motion assignments first; placement afterwards.
      const int target_color = rng.next_int(0, 5);
      const int target_shape = rng.next_int(0, 2);
      const int target_motion = rng.next_int(0, 4);

      std::vector<std::array<int, 3>> specs;  // color, shape, motion
      specs.push_back({target_color, target_shape, target_motion});
      if (difficulty == Difficulty::EASY) {
        int color, shape, motion;
        do { color = rng.next_int(0, 5); } while (color == target_color);
        do { shape = rng.next_int(0, 2); } while (shape == target_shape);
        do { motion = rng.next_int(0, 4); } while (motion == target_motion);
        specs.push_back({color, shape, motion});
      } else {
        // Same motion word, different look.
        int color, shape;
        do { color = rng.next_int(0, 5); } while (color == target_color);
        do { shape = rng.next_int(0, 2); } while (shape == target_shape);
        specs.push_back({color, shape, target_motion});
        // Same color, different shape and motion.
        int shape2, motion2;
        do { shape2 = rng.next_int(0, 2); } while (shape2 == target_shape);
        do { motion2 = rng.next_int(0, 4); } while (motion2 == target_motion);
        specs.push_back({target_color, shape2, motion2});
      }

      bool ok = true;
      for (int i = 0; i < num_instances && ok; ++i) {
        InstanceSpec inst;
        inst.color = specs[i][0];
        inst.shape = static_cast<Shape>(specs[i][1]);
        inst.motion = motions()[specs[i][2]].word;
        inst.size = 12 + 2 * rng.next_int(0, 3);  // 12..18, even
        const int speed =
            inst.motion == "still" ? 0 : rng.next_int(1, 3);
        inst.vel_x = motions()[specs[i][2]].dx * speed;
        inst.vel_y = motions()[specs[i][2]].dy * speed;

        // Start so the whole trajectory stays inside the canvas.
        const int margin = inst.size / 2 + 1;
        const int travel_x = inst.vel_x * (frame_count - 1);
        const int travel_y = inst.vel_y * (frame_count - 1);
        const int lo_x = margin + std::max(0, -travel_x);
        const int hi_x = width - 2 - margin - std::max(0, travel_x);
        const int lo_y = margin + std::max(0, -travel_y);
        const int hi_y = height - 2 - margin - std::max(0, travel_y);
        if (lo_x > hi_x || lo_y > hi_y) {
          ok = false;
          break;
        }
        inst.start_x = rng.next_int(lo_x, hi_x);
        inst.start_y = rng.next_int(lo_y, hi_y);

        for (int t = 0; t < frame_count && ok; ++t)
          ok = inside_canvas(inst, t, height, width);
        for (const InstanceSpec& other : scene.instances)
          if (ok) ok = trajectories_disjoint(inst, other, frame_count);
        if (ok) scene.instances.push_back(inst);
      }
      placed = ok && static_cast<int>(scene.instances.size()) == num_instances;
    }
    if (!placed)
      throw std::runtime_error("generate: no feasible placement for sample " +
                               std::to_string(index));

    Sample sample;
    sample.id = [index] {
      char buf[16];
      std::snprintf(buf, sizeof buf, "%06d", index);
      return std::string(buf);
    }();
    sample.scene = scene;

    const InstanceSpec& target = scene.instances[scene.target_index];
    std::vector<std::string> tokens = {"a", palette()[target.color].name,
                                       to_string(target.shape), "is"};
    for (const std::string& m : motion_tokens(target.motion))
      tokens.push_back(m);
    sample.expression = shorten(pos_tag(tokens, lex));

    sample.clip.annotated_indices = scene.annotated_indices;
    for (int t = 0; t < frame_count; ++t)
      sample.clip.frames.push_back(render_frame(scene, t));

    for (int t = 0; t < frame_count; ++t) {
      sample.gt.visible.push_back(1);
      sample.gt.masks.push_back(rasterize_mask(target, t, height, width));
    }

    corpus.push_back(std::move(sample));
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// Corpus directory layout:
//   <root>/<sample_id>/frames/%04d.ppm
//   <root>/<sample_id>/masks/%04d.pgm
//   <root>/manifest.json
// ---------------------------------------------------------------------------

inline void write_corpus(const std::vector<Sample>& corpus,
                         const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  fs::create_directories(root);
  nlohmann::json manifest;
  manifest["samples"] = nlohmann::json::array();

  for (const Sample& s : corpus) {
    fs::create_directories(root / s.id / "frames");
    fs::create_directories(root / s.id / "masks");
    nlohmann::json js;
    js["id"] = s.id;
    js["annotated_indices"] = s.scene.annotated_indices;
    js["long_expression"] = s.expression.long_expr.joined();
    js["short_expression"] = s.expression.short_expr.joined();
    js["frames"] = nlohmann::json::array();
    js["masks"] = nlohmann::json::array();

    char name[32];
    for (int t = 0; t < s.clip.frame_count(); ++t) {
      std::snprintf(name, sizeof name, "%04d.ppm", t);
      write_frame(s.clip.frames[t], root / s.id / "frames" / name);
      js["frames"].push_back(s.id + "/frames/" + name);
      std::snprintf(name, sizeof name, "%04d.pgm", t);
      write_binary_mask(*s.gt.masks[t], root / s.id / "masks" / name);
      js["masks"].push_back(s.id + "/masks/" + name);
    }

    nlohmann::json scene;
    scene["height"] = s.scene.height;
    scene["width"] = s.scene.width;
    scene["frame_count"] = s.scene.frame_count;
    scene["target_index"] = s.scene.target_index;
    scene["background_seed"] = s.scene.background_seed;
    scene["instances"] = nlohmann::json::array();
    for (const InstanceSpec& inst : s.scene.instances) {
      nlohmann::json ji;
      ji["shape"] = to_string(inst.shape);
      ji["color"] = palette()[inst.color].name;
      ji["size"] = inst.size;
      ji["start_x"] = inst.start_x;
      ji["start_y"] = inst.start_y;
      ji["vel_x"] = inst.vel_x;
      ji["vel_y"] = inst.vel_y;
      ji["motion"] = inst.motion;
      scene["instances"].push_back(ji);
    }
    js["scene"] = scene;
    manifest["samples"].push_back(js);
  }

  std::ofstream out(root / "manifest.json", std::ios::trunc);
  if (!out)
    throw std::runtime_error("cannot write manifest under " + root.string());
  out << manifest.dump(2) << "\n";
}

inline std::vector<Sample> load_corpus(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  std::ifstream in(root / "manifest.json");
  if (!in)
    throw std::runtime_error("cannot open manifest under " + root.string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest parse error: ") + e.what(), 0);
  }

  const Lexicon lex = Lexicon::builtin();
  std::vector<Sample> corpus;
  for (const auto& js : manifest.at("samples")) {
    Sample s;
    s.id = js.at("id").get<std::string>();
    const auto& scene = js.at("scene");
    s.scene.height = scene.at("height").get<int>();
    s.scene.width = scene.at("width").get<int>();
    s.scene.frame_count = scene.at("frame_count").get<int>();
    s.scene.target_index = scene.at("target_index").get<int>();
    s.scene.background_seed = scene.at("background_seed").get<std::uint64_t>();
    for (const auto& ji : scene.at("instances")) {
      InstanceSpec inst;
      inst.shape = shape_from_string(ji.at("shape").get<std::string>());
      inst.color = palette_index(ji.at("color").get<std::string>());
      inst.size = ji.at("size").get<int>();
      inst.start_x = ji.at("start_x").get<int>();
      inst.start_y = ji.at("start_y").get<int>();
      inst.vel_x = ji.at("vel_x").get<int>();
      inst.vel_y = ji.at("vel_y").get<int>();
      inst.motion = ji.at("motion").get<std::string>();
      s.scene.instances.push_back(inst);
    }
    s.scene.annotated_indices =
        js.at("annotated_indices").get<std::vector<int>>();
    s.clip.annotated_indices = s.scene.annotated_indices;

    for (const auto& rel : js.at("frames"))
      s.clip.frames.push_back(read_frame(root / rel.get<std::string>()));
    for (const auto& rel : js.at("masks")) {
      s.gt.visible.push_back(1);
      s.gt.masks.push_back(read_binary_mask(root / rel.get<std::string>()));
    }

    s.expression =
        shorten(pos_tag(tokenize(js.at("long_expression").get<std::string>()),
                        lex));
    corpus.push_back(std::move(s));
  }
  return corpus;
}

}  // namespace losh
