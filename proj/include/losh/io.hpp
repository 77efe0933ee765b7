#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "losh/grid.hpp"

namespace losh {

// Malformed or truncated file. byte_offset() points at the first offending
// byte so a corrupt payload can be located directly.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& msg, std::uint64_t offset)
      : std::runtime_error(msg + " (byte offset " + std::to_string(offset) +
                           ")"),
        offset_(offset) {}

  std::uint64_t byte_offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

namespace detail {

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

inline void write_file(const std::filesystem::path& path,
                       const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

inline void put_f32(std::vector<std::uint8_t>& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

inline void put_f64(std::vector<std::uint8_t>& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u32(out, static_cast<std::uint32_t>(bits & 0xffffffffull));
  put_u32(out, static_cast<std::uint32_t>(bits >> 32));
}

// Cursor over an in-memory file; every getter reports the offset it
// started reading at when the payload runs short.
class Reader {
 public:
  explicit Reader(std::vector<std::uint8_t> bytes) : bytes_(std::move(bytes)) {}

  std::uint64_t offset() const { return pos_; }
  bool at_end() const { return pos_ == bytes_.size(); }

  std::uint8_t u8() {
    need(1, "unexpected end of file");
    return bytes_[pos_++];
  }

  std::uint32_t u32() {
    need(4, "truncated 32-bit field");
    std::uint32_t v = bytes_[pos_] | (bytes_[pos_ + 1] << 8) |
                      (bytes_[pos_ + 2] << 16) |
                      (static_cast<std::uint32_t>(bytes_[pos_ + 3]) << 24);
    pos_ += 4;
    return v;
  }

  float f32() {
    std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }

  double f64() {
    need(8, "truncated 64-bit field");
    std::uint64_t lo = u32();
    std::uint64_t hi = u32();
    std::uint64_t bits = lo | (hi << 32);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }

  void expect_magic(const char* magic) {
    const std::uint64_t at = pos_;
    for (const char* p = magic; *p; ++p) {
      if (pos_ >= bytes_.size() || bytes_[pos_] != static_cast<std::uint8_t>(*p))
        throw FormatError(std::string("bad magic, expected \"") + magic + "\"",
                          at);
      ++pos_;
    }
  }

  void raw(void* dst, std::size_t n, const char* what) {
    need(n, what);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }

  void need(std::size_t n, const char* what) const {
    if (pos_ + n > bytes_.size()) throw FormatError(what, pos_);
  }

 private:
  std::vector<std::uint8_t> bytes_;
  std::uint64_t pos_ = 0;
};

// PNM header token: skips whitespace and '#' comments.
inline std::uint32_t pnm_uint(Reader& r, const char* what) {
  for (;;) {
    r.need(1, what);
    std::uint8_t c = r.u8();
    if (c == '#') {
      while (true) {
        r.need(1, what);
        if (r.u8() == '\n') break;
      }
      continue;
    }
    if (c == ' ' || c == '\t' || c == '\r' || c == '\n') continue;
    if (c < '0' || c > '9')
      throw FormatError(std::string("expected digit in ") + what,
                        r.offset() - 1);
    std::uint64_t v = c - '0';
    for (;;) {
      r.need(1, what);
      std::uint8_t d = r.u8();
      if (d >= '0' && d <= '9') {
        v = v * 10 + (d - '0');
        if (v > 0xffffffffull)
          throw FormatError(std::string("overflow in ") + what, r.offset());
        continue;
      }
      if (d == ' ' || d == '\t' || d == '\r' || d == '\n')
        return static_cast<std::uint32_t>(v);
      throw FormatError(std::string("expected digit in ") + what,
                        r.offset() - 1);
    }
  }
}

inline void check_dims(std::uint32_t w, std::uint32_t h, std::uint64_t at) {
  if (w == 0 || h == 0) throw FormatError("zero dimension", at);
  if (w > (1u << 20) || h > (1u << 20))
    throw FormatError("implausible dimension", at);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Frames: binary PPM (P6), 8-bit, row-major.
// ---------------------------------------------------------------------------

inline void write_frame(const Image& img, const std::filesystem::path& path) {
  std::vector<std::uint8_t> out;
  std::string header = "P6\n" + std::to_string(img.width()) + " " +
                       std::to_string(img.height()) + "\n255\n";
  out.insert(out.end(), header.begin(), header.end());
  for (double v : img.values()) {
    if (v < 0.0 || v > 1.0)
      throw std::invalid_argument("write_frame: channel value outside [0,1]");
    out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
  }
  detail::write_file(path, out);
}

inline Image read_frame(const std::filesystem::path& path) {
  detail::Reader r(detail::read_file(path));
  r.expect_magic("P6");
  std::uint32_t w = detail::pnm_uint(r, "width");
  std::uint32_t h = detail::pnm_uint(r, "height");
  std::uint64_t at = r.offset();
  std::uint32_t maxval = detail::pnm_uint(r, "maxval");
  if (maxval != 255) throw FormatError("maxval must be 255", at);
  detail::check_dims(w, h, 2);
  Image img(static_cast<int>(h), static_cast<int>(w));
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(w) * h * 3);
  r.raw(raw.data(), raw.size(), "truncated pixel payload");
  if (!r.at_end()) throw FormatError("trailing bytes after payload", r.offset());
  for (std::size_t i = 0; i < raw.size(); ++i)
    img.values()[i] = raw[i] / 255.0;
  return img;
}

// ---------------------------------------------------------------------------
// Binary masks: binary PGM (P5), 0 = background, 255 = foreground.
// ---------------------------------------------------------------------------

inline void write_binary_mask(const BinaryMask& m,
                              const std::filesystem::path& path) {
  std::vector<std::uint8_t> out;
  std::string header = "P5\n" + std::to_string(m.width()) + " " +
                       std::to_string(m.height()) + "\n255\n";
  out.insert(out.end(), header.begin(), header.end());
  for (std::uint8_t v : m.values())
    out.push_back(v ? std::uint8_t{255} : std::uint8_t{0});
  detail::write_file(path, out);
}

inline BinaryMask read_binary_mask(const std::filesystem::path& path) {
  detail::Reader r(detail::read_file(path));
  r.expect_magic("P5");
  std::uint32_t w = detail::pnm_uint(r, "width");
  std::uint32_t h = detail::pnm_uint(r, "height");
  std::uint64_t at = r.offset();
  std::uint32_t maxval = detail::pnm_uint(r, "maxval");
  if (maxval != 255) throw FormatError("maxval must be 255", at);
  detail::check_dims(w, h, 2);
  BinaryMask m(static_cast<int>(h), static_cast<int>(w));
  for (std::size_t i = 0; i < m.size(); ++i) {
    std::uint64_t here = r.offset();
    std::uint8_t v = r.u8();
    if (v != 0 && v != 255)
      throw FormatError("mask byte must be 0 or 255", here);
    m.values()[i] = v ? 1 : 0;
  }
  if (!r.at_end()) throw FormatError("trailing bytes after payload", r.offset());
  return m;
}

// ---------------------------------------------------------------------------
// Probability masks: "LPRB", u32 LE width, u32 LE height, u32 reserved = 0,
// then height*width 32-bit LE floats, row-major.
// ---------------------------------------------------------------------------

inline void write_mask(const ProbMask& m, const std::filesystem::path& path) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), {'L', 'P', 'R', 'B'});
  detail::put_u32(out, static_cast<std::uint32_t>(m.width()));
  detail::put_u32(out, static_cast<std::uint32_t>(m.height()));
  detail::put_u32(out, 0);
  for (double v : m.values()) {
    if (!(v >= 0.0 && v <= 1.0))
      throw std::invalid_argument("write_mask: value outside [0,1]");
    detail::put_f32(out, static_cast<float>(v));
  }
  detail::write_file(path, out);
}

inline ProbMask read_mask(const std::filesystem::path& path) {
  detail::Reader r(detail::read_file(path));
  r.expect_magic("LPRB");
  std::uint32_t w = r.u32();
  std::uint32_t h = r.u32();
  detail::check_dims(w, h, 4);
  std::uint64_t at = r.offset();
  if (r.u32() != 0) throw FormatError("reserved field must be 0", at);
  ProbMask m(static_cast<int>(h), static_cast<int>(w));
  for (std::size_t i = 0; i < m.size(); ++i) {
    std::uint64_t here = r.offset();
    double v = r.f32();
    if (!(v >= 0.0 && v <= 1.0))
      throw FormatError("probability outside [0,1]", here);
    m.values()[i] = v;
  }
  if (!r.at_end()) throw FormatError("trailing bytes after payload", r.offset());
  return m;
}

// ---------------------------------------------------------------------------
// Flow fields: "LFLO", u32 LE width, u32 LE height, u32 reserved = 0, then
// height*width (u,v) pairs of 32-bit LE floats, row-major.
// ---------------------------------------------------------------------------

inline void write_flow(const FlowField& f, const std::filesystem::path& path) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), {'L', 'F', 'L', 'O'});
  detail::put_u32(out, static_cast<std::uint32_t>(f.width()));
  detail::put_u32(out, static_cast<std::uint32_t>(f.height()));
  detail::put_u32(out, 0);
  for (int y = 0; y < f.height(); ++y)
    for (int x = 0; x < f.width(); ++x) {
      if (!std::isfinite(f.u(y, x)) || !std::isfinite(f.v(y, x)))
        throw std::invalid_argument("write_flow: non-finite displacement");
      detail::put_f32(out, static_cast<float>(f.u(y, x)));
      detail::put_f32(out, static_cast<float>(f.v(y, x)));
    }
  detail::write_file(path, out);
}

inline FlowField read_flow(const std::filesystem::path& path) {
  detail::Reader r(detail::read_file(path));
  r.expect_magic("LFLO");
  std::uint32_t w = r.u32();
  std::uint32_t h = r.u32();
  detail::check_dims(w, h, 4);
  std::uint64_t at = r.offset();
  if (r.u32() != 0) throw FormatError("reserved field must be 0", at);
  FlowField f(static_cast<int>(h), static_cast<int>(w));
  for (int y = 0; y < f.height(); ++y)
    for (int x = 0; x < f.width(); ++x) {
      std::uint64_t here = r.offset();
      double uu = r.f32();
      double vv = r.f32();
      if (!std::isfinite(uu) || !std::isfinite(vv))
        throw FormatError("non-finite displacement", here);
      f.u(y, x) = uu;
      f.v(y, x) = vv;
    }
  if (!r.at_end()) throw FormatError("trailing bytes after payload", r.offset());
  return f;
}

}  // namespace losh
