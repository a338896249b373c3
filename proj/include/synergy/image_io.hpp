#pragma once

// Image codecs. Binary PPM (P6) / PGM (P5) are implemented here so golden
// tests stay byte-exact; PNG decoding is delegated to libpng's simplified
// read API. All decode failures throw input_error naming the byte offset.

#include <png.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "synergy/common.hpp"
#include "synergy/image.hpp"

namespace synergy {

// ---------------------------------------------------------------------------
// Raw file helpers.
// ---------------------------------------------------------------------------

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw input_error("cannot open file: " + path.string());
  std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>()};
  if (in.bad()) throw input_error("read failed: " + path.string());
  return bytes;
}

inline void write_file(const std::filesystem::path& path,
                       const void* data, std::size_t n) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw input_error("cannot open file for writing: " + path.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!out) throw input_error("write failed: " + path.string());
}

inline void write_file(const std::filesystem::path& path,
                       const std::vector<unsigned char>& bytes) {
  write_file(path, bytes.data(), bytes.size());
}

inline void write_text_file(const std::filesystem::path& path,
                            const std::string& text) {
  write_file(path, text.data(), text.size());
}

inline std::string read_text_file(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  return std::string(bytes.begin(), bytes.end());
}

// ---------------------------------------------------------------------------
// PNM (P5 / P6) decoding.
// ---------------------------------------------------------------------------

namespace detail {

struct PnmCursor {
  const unsigned char* p;
  std::size_t n;
  std::size_t off = 0;

  [[noreturn]] void fail(const std::string& what) const {
    throw input_error("PNM decode error at byte " + std::to_string(off) +
                      ": " + what);
  }

  int peek() const { return off < n ? p[off] : -1; }
  int take() {
    if (off >= n) fail("unexpected end of data");
    return p[off++];
  }

  // Skip whitespace and '#' comments (comments run to end of line).
  void skip_space() {
    for (;;) {
      int c = peek();
      if (c == '#') {
        while (off < n && p[off] != '\n') ++off;
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        ++off;
      } else {
        return;
      }
    }
  }

  int read_uint(const char* field) {
    skip_space();
    if (peek() < '0' || peek() > '9')
      fail(std::string("expected unsigned integer for ") + field);
    long v = 0;
    while (peek() >= '0' && peek() <= '9') {
      v = v * 10 + (take() - '0');
      if (v > 1'000'000'000L) fail(std::string(field) + " out of range");
    }
    return static_cast<int>(v);
  }
};

}  // namespace detail

inline RgbImage decode_pnm(const unsigned char* bytes, std::size_t n) {
  detail::PnmCursor cur{bytes, n};
  if (n < 2) cur.fail("missing magic");
  const char m0 = static_cast<char>(cur.take());
  const char m1 = static_cast<char>(cur.take());
  if (m0 != 'P' || (m1 != '5' && m1 != '6'))
    throw input_error("PNM decode error at byte 0: unsupported magic (want P5 or P6)");
  const bool color = (m1 == '6');

  const int w = cur.read_uint("width");
  const int h = cur.read_uint("height");
  const int maxval = cur.read_uint("maxval");
  if (w < 1 || h < 1) cur.fail("dimensions must be >= 1");
  if (maxval < 1 || maxval > 255) cur.fail("unsupported maxval (want 1..255)");

  // Exactly one whitespace byte separates the header from the payload.
  const int sep = cur.take();
  if (sep != ' ' && sep != '\t' && sep != '\r' && sep != '\n')
    cur.fail("expected single whitespace before payload");

  const std::size_t channels = color ? 3 : 1;
  const std::size_t need = channels * static_cast<std::size_t>(w) * h;
  if (n - cur.off < need) {
    cur.off = n;
    cur.fail("truncated payload (need " + std::to_string(need) + " bytes)");
  }

  RgbImage img(w, h);
  const double scale = 1.0 / maxval;
  const unsigned char* src = bytes + cur.off;
  for (std::size_t i = 0; i < static_cast<std::size_t>(w) * h; ++i) {
    if (color) {
      img.data[3 * i + 0] = src[3 * i + 0] * scale;
      img.data[3 * i + 1] = src[3 * i + 1] * scale;
      img.data[3 * i + 2] = src[3 * i + 2] * scale;
    } else {
      const double v = src[i] * scale;
      img.data[3 * i + 0] = v;
      img.data[3 * i + 1] = v;
      img.data[3 * i + 2] = v;
    }
  }
  return img;
}

// ---------------------------------------------------------------------------
// PNG decoding (libpng simplified API).
// ---------------------------------------------------------------------------

inline RgbImage decode_png(const unsigned char* bytes, std::size_t n) {
  png_image im{};
  im.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&im, bytes, n))
    throw input_error(std::string("PNG decode error at byte 0: ") + im.message);
  im.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> buf(PNG_IMAGE_SIZE(im));
  if (!png_image_finish_read(&im, nullptr, buf.data(), 0, nullptr)) {
    std::string msg = im.message;
    png_image_free(&im);
    throw input_error("PNG decode error at byte 0: " + msg);
  }
  RgbImage img(static_cast<int>(im.width), static_cast<int>(im.height));
  for (std::size_t i = 0; i < img.data.size(); ++i)
    img.data[i] = buf[i] / 255.0;
  return img;
}

// ---------------------------------------------------------------------------
// Format dispatch + encoders.
// ---------------------------------------------------------------------------

inline RgbImage decode_image(const unsigned char* bytes, std::size_t n) {
  if (n >= 8 && bytes[0] == 0x89 && bytes[1] == 'P' && bytes[2] == 'N' &&
      bytes[3] == 'G')
    return decode_png(bytes, n);
  if (n >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6'))
    return decode_pnm(bytes, n);
  throw input_error("decode error at byte 0: unrecognized image magic");
}

inline RgbImage decode_image(const std::vector<unsigned char>& bytes) {
  return decode_image(bytes.data(), bytes.size());
}

inline RgbImage load_image(const std::filesystem::path& path) {
  try {
    return decode_image(read_file(path));
  } catch (const input_error& e) {
    throw input_error(path.string() + ": " + e.what());
  }
}

inline GrayImage load_grayscale(const std::filesystem::path& path) {
  return to_grayscale(load_image(path));
}

inline unsigned char quantize_byte(double v) {
  const long long q = round_half_away(v * 255.0);
  return static_cast<unsigned char>(q < 0 ? 0 : (q > 255 ? 255 : q));
}

inline std::vector<unsigned char> encode_pgm(const GrayImage& img) {
  std::string header = "P5\n" + std::to_string(img.width) + " " +
                       std::to_string(img.height) + "\n255\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  out.reserve(out.size() + img.data.size());
  for (double v : img.data) out.push_back(quantize_byte(v));
  return out;
}

inline std::vector<unsigned char> encode_ppm(const RgbImage& img) {
  std::string header = "P6\n" + std::to_string(img.width) + " " +
                       std::to_string(img.height) + "\n255\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  out.reserve(out.size() + img.data.size());
  for (double v : img.data) out.push_back(quantize_byte(v));
  return out;
}

}  // namespace synergy
