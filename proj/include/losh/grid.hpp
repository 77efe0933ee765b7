#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace losh {

// Dense row-major 2-d grid. All pixel math in this library runs in double
// precision; narrower encodings exist only at the file-format boundary.
template <typename T>
class Grid {
 public:
  Grid() = default;

  Grid(int height, int width, T fill = T{})
      : height_(height), width_(width) {
    if (height <= 0 || width <= 0)
      throw std::invalid_argument("Grid: dimensions must be positive");
    data_.assign(static_cast<std::size_t>(height) * width, fill);
  }

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int y, int x) { return data_[idx(y, x)]; }
  const T& operator()(int y, int x) const { return data_[idx(y, x)]; }

  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  bool same_shape(const Grid& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  bool operator==(const Grid& other) const {
    return height_ == other.height_ && width_ == other.width_ &&
           data_ == other.data_;
  }

 private:
  std::size_t idx(int y, int x) const {
    return static_cast<std::size_t>(y) * width_ + x;
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<T> data_;
};

// Per-pixel foreground probabilities in [0,1].
using ProbMask = Grid<double>;

// Single-channel real-valued image (grayscale intensities).
using GrayImage = Grid<double>;

// Hard 0/1 labels.
using BinaryMask = Grid<std::uint8_t>;

// Per-pixel 2-d displacement, in pixels along x (u) and y (v).
struct FlowField {
  FlowField() = default;
  FlowField(int height, int width)
      : u(height, width, 0.0), v(height, width, 0.0) {}

  int height() const { return u.height(); }
  int width() const { return u.width(); }

  bool operator==(const FlowField& other) const {
    return u == other.u && v == other.v;
  }

  Grid<double> u;
  Grid<double> v;
};

// Channel-major c*h*w feature block.
class FeatureMap {
 public:
  FeatureMap() = default;

  FeatureMap(int channels, int height, int width, double fill = 0.0)
      : channels_(channels), height_(height), width_(width) {
    if (channels <= 0 || height <= 0 || width <= 0)
      throw std::invalid_argument("FeatureMap: dimensions must be positive");
    data_.assign(static_cast<std::size_t>(channels) * height * width, fill);
  }

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(int c, int y, int x) { return data_[idx(c, y, x)]; }
  double operator()(int c, int y, int x) const { return data_[idx(c, y, x)]; }

  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  bool same_shape(const FeatureMap& other) const {
    return channels_ == other.channels_ && height_ == other.height_ &&
           width_ == other.width_;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](double x) { return std::isfinite(x); });
  }

 private:
  std::size_t idx(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
  }

  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

// Interleaved RGB image, channel values in [0,1].
class Image {
 public:
  Image() = default;

  Image(int height, int width, double fill = 0.0)
      : height_(height), width_(width) {
    if (height <= 0 || width <= 0)
      throw std::invalid_argument("Image: dimensions must be positive");
    data_.assign(static_cast<std::size_t>(height) * width * 3, fill);
  }

  int height() const { return height_; }
  int width() const { return width_; }

  double& operator()(int y, int x, int ch) { return data_[idx(y, x, ch)]; }
  double operator()(int y, int x, int ch) const { return data_[idx(y, x, ch)]; }

  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  bool same_shape(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  bool operator==(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_ &&
           data_ == other.data_;
  }

 private:
  std::size_t idx(int y, int x, int ch) const {
    return (static_cast<std::size_t>(y) * width_ + x) * 3 + ch;
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

// Frame sequence with the indices that carry ground-truth annotation.
struct VideoClip {
  std::vector<Image> frames;
  std::vector<int> annotated_indices;

  int frame_count() const { return static_cast<int>(frames.size()); }
  int height() const { return frames.empty() ? 0 : frames.front().height(); }
  int width() const { return frames.empty() ? 0 : frames.front().width(); }
};

// ITU-R BT.601 luma.
inline GrayImage to_gray(const Image& img) {
  GrayImage out(img.height(), img.width());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      out(y, x) =
          0.299 * img(y, x, 0) + 0.587 * img(y, x, 1) + 0.114 * img(y, x, 2);
  return out;
}

// Zeroes every pixel below tau; pixels at or above tau keep their
// probability (the soft set measures below multiply probabilities, so
// surviving values must stay un-binarized).
inline ProbMask threshold_filter(const ProbMask& m, double tau) {
  if (tau < 0.0 || tau > 1.0)
    throw std::invalid_argument("threshold_filter: tau outside [0,1]");
  ProbMask out = m;
  for (double& v : out.values())
    if (v < tau) v = 0.0;
  return out;
}

// Sum of foreground probabilities.
inline double soft_area(const ProbMask& m) {
  return std::accumulate(m.values().begin(), m.values().end(), 0.0);
}

// Probability-weighted intersection area.
inline double soft_intersection(const ProbMask& a, const ProbMask& b) {
  if (!a.same_shape(b))
    throw std::invalid_argument("soft_intersection: shape mismatch");
  double s = 0.0;
  const auto& va = a.values();
  const auto& vb = b.values();
  for (std::size_t i = 0; i < va.size(); ++i) s += va[i] * vb[i];
  return s;
}

inline ProbMask to_prob(const BinaryMask& m) {
  ProbMask out(m.height(), m.width());
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) out(y, x) = m(y, x) ? 1.0 : 0.0;
  return out;
}

inline BinaryMask binarize(const ProbMask& m, double tau = 0.5) {
  BinaryMask out(m.height(), m.width());
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x)
      out(y, x) = m(y, x) >= tau ? std::uint8_t{1} : std::uint8_t{0};
  return out;
}

// Nearest-neighbor resample; keeps binary masks binary.
template <typename T>
Grid<T> resize_nearest(const Grid<T>& src, int height, int width) {
  Grid<T> out(height, width);
  for (int y = 0; y < height; ++y) {
    int sy = std::min(static_cast<int>((y + 0.5) * src.height() / height),
                      src.height() - 1);
    for (int x = 0; x < width; ++x) {
      int sx = std::min(static_cast<int>((x + 0.5) * src.width() / width),
                        src.width() - 1);
      out(y, x) = src(sy, sx);
    }
  }
  return out;
}

}  // namespace losh
