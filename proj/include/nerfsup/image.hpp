// Copyright Contributors to the nerfsup project
// SPDX-License-Identifier: Apache-2.0

// Image containers and their file codecs: 8-bit RGB / gray as PNG or binary
// PPM / PGM, and 32-bit float depth maps with a small header.

#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include <png.h>

#include "nerfsup/error.hpp"
#include "nerfsup/geometry.hpp"
#include "nerfsup/io.hpp"

namespace nerfsup {

// RGB image with channels in [0, 1], row-major, interleaved.
struct ImageRGB {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  ImageRGB() = default;
  ImageRGB(int w, int h) : width(w), height(h), data(std::size_t(w) * h * 3, 0.0f) {}

  float* at(int x, int y) { return data.data() + (std::size_t(y) * width + x) * 3; }
  const float* at(int x, int y) const { return data.data() + (std::size_t(y) * width + x) * 3; }
  Vec3 rgb(int x, int y) const {
    const float* p = at(x, y);
    return {p[0], p[1], p[2]};
  }
  void set(int x, int y, const Vec3& c) {
    float* p = at(x, y);
    for (int ch = 0; ch < 3; ++ch) p[ch] = static_cast<float>(c[ch]);
  }
  friend bool operator==(const ImageRGB&, const ImageRGB&) = default;
};

// Binary mask; nonzero means in-mask.
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  Mask() = default;
  Mask(int w, int h, bool value = false) : width(w), height(h), data(std::size_t(w) * h, value ? 1 : 0) {}

  bool at(int x, int y) const { return data[std::size_t(y) * width + x] != 0; }
  void set(int x, int y, bool v) { data[std::size_t(y) * width + x] = v ? 1 : 0; }
  std::size_t count() const { return std::size_t(std::count_if(data.begin(), data.end(), [](auto v) { return v != 0; })); }
  // Nearest-pixel lookup for sub-pixel coordinates; false outside the image.
  bool contains(const Pixel& px) const {
    const int x = static_cast<int>(std::lround(px.u));
    const int y = static_cast<int>(std::lround(px.v));
    return x >= 0 && y >= 0 && x < width && y < height && at(x, y);
  }
  friend bool operator==(const Mask&, const Mask&) = default;
};

struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  DepthMap() = default;
  DepthMap(int w, int h) : width(w), height(h), data(std::size_t(w) * h, 0.0f) {}
  float& at(int x, int y) { return data[std::size_t(y) * width + x]; }
  float at(int x, int y) const { return data[std::size_t(y) * width + x]; }
  friend bool operator==(const DepthMap&, const DepthMap&) = default;
};

inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

// ---------------------------------------------------------------------------
// PNG (libpng) and PPM/PGM codecs over 8-bit buffers with 1 or 3 channels.

namespace detail {

struct Raster {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> bytes;
};

inline bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && std::equal(suffix.rbegin(), suffix.rend(), s.rbegin(),
                                                 [](char a, char b) { return std::tolower(a) == std::tolower(b); });
}

inline void png_write_callback(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::string*>(png_get_io_ptr(png));
  out->append(reinterpret_cast<const char*>(data), length);
}

inline std::string encode_png(const Raster& r) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (png == nullptr) throw Error("png: cannot create writer");
  png_infop info = png_create_info_struct(png);
  std::string out;
  if (info == nullptr || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("png: encoding failed");
  }
  png_set_write_fn(png, &out, png_write_callback, nullptr);
  png_set_IHDR(png, info, png_uint_32(r.width), png_uint_32(r.height), 8,
               r.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < r.height; ++y)
    png_write_row(png, const_cast<png_bytep>(r.bytes.data() + std::size_t(y) * r.width * r.channels));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

inline Raster decode_png(const std::string& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw LoadError(path + ": cannot read PNG (" + image.message + ")");
  const bool gray = (image.format & PNG_FORMAT_FLAG_COLOR) == 0;
  image.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  Raster r;
  r.width = int(image.width);
  r.height = int(image.height);
  r.channels = gray ? 1 : 3;
  r.bytes.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, r.bytes.data(), 0, nullptr)) {
    png_image_free(&image);
    throw LoadError(path + ": cannot decode PNG");
  }
  return r;
}

inline std::string encode_pnm(const Raster& r) {
  std::string out = (r.channels == 3 ? "P6\n" : "P5\n") + std::to_string(r.width) + " " +
                    std::to_string(r.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(r.bytes.data()), r.bytes.size());
  return out;
}

inline Raster decode_pnm(const std::string& path) {
  const std::string data = read_file(path);
  std::size_t pos = 0;
  auto token = [&]() {
    for (;;) {
      while (pos < data.size() && std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
      if (pos < data.size() && data[pos] == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    const std::size_t start = pos;
    while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
    return data.substr(start, pos - start);
  };
  const std::string magic = token();
  if (magic != "P6" && magic != "P5") throw LoadError(path + ": not a binary PPM/PGM");
  Raster r;
  r.channels = magic == "P6" ? 3 : 1;
  try {
    r.width = std::stoi(token());
    r.height = std::stoi(token());
    if (std::stoi(token()) != 255) throw LoadError(path + ": only 8-bit PPM/PGM supported");
  } catch (const std::logic_error&) {
    throw LoadError(path + ": malformed PPM/PGM header");
  }
  ++pos;  // single whitespace before the raster
  const std::size_t n = std::size_t(r.width) * r.height * r.channels;
  if (r.width <= 0 || r.height <= 0 || pos + n != data.size()) throw LoadError(path + ": truncated PPM/PGM");
  r.bytes.assign(data.begin() + std::ptrdiff_t(pos), data.end());
  return r;
}

inline Raster read_raster(const std::string& path) {
  if (ends_with(path, ".png")) return decode_png(path);
  if (ends_with(path, ".ppm") || ends_with(path, ".pgm") || ends_with(path, ".pnm")) return decode_pnm(path);
  throw LoadError(path + ": unsupported image extension (use .png, .ppm or .pgm)");
}

inline void write_raster(const std::string& path, const Raster& r) {
  if (ends_with(path, ".png")) write_file(path, encode_png(r));
  else if (ends_with(path, ".ppm") || ends_with(path, ".pgm") || ends_with(path, ".pnm")) write_file(path, encode_pnm(r));
  else throw Error(path + ": unsupported image extension (use .png, .ppm or .pgm)");
}

}  // namespace detail

inline void write_image(const std::string& path, const ImageRGB& img) {
  detail::Raster r{img.width, img.height, 3, {}};
  r.bytes.resize(img.data.size());
  std::transform(img.data.begin(), img.data.end(), r.bytes.begin(), [](float v) { return to_byte(v); });
  detail::write_raster(path, r);
}

inline ImageRGB read_image(const std::string& path) {
  const detail::Raster r = detail::read_raster(path);
  ImageRGB img(r.width, r.height);
  for (std::size_t i = 0; i < std::size_t(r.width) * r.height; ++i)
    for (int ch = 0; ch < 3; ++ch)
      img.data[i * 3 + ch] = float(r.bytes[i * r.channels + (r.channels == 3 ? ch : 0)]) / 255.0f;
  return img;
}

inline void write_mask(const std::string& path, const Mask& mask) {
  detail::Raster r{mask.width, mask.height, 1, {}};
  r.bytes.resize(mask.data.size());
  std::transform(mask.data.begin(), mask.data.end(), r.bytes.begin(), [](auto v) { return v ? 255 : 0; });
  detail::write_raster(path, r);
}

inline Mask read_mask(const std::string& path) {
  const detail::Raster r = detail::read_raster(path);
  Mask m(r.width, r.height);
  for (std::size_t i = 0; i < m.data.size(); ++i) {
    bool on = false;
    for (int ch = 0; ch < r.channels; ++ch) on = on || r.bytes[i * r.channels + ch] != 0;
    m.data[i] = on ? 1 : 0;
  }
  return m;
}

// Quantizes to the 8-bit grid a written image would have.
inline ImageRGB quantize(ImageRGB img) {
  for (float& v : img.data) v = float(to_byte(v)) / 255.0f;
  return img;
}

// Depth map file:
//   char[8] magic "NSDEPTH\0", u32 version (1), u32 width, u32 height,
//   f32[width*height] row-major depth; little-endian.
inline constexpr char kDepthMagic[9] = "NSDEPTH";

inline std::string encode_depth_map(const DepthMap& d) {
  std::string out(kDepthMagic, 8);
  detail::put_u32(out, 1);
  detail::put_u32(out, std::uint32_t(d.width));
  detail::put_u32(out, std::uint32_t(d.height));
  for (float v : d.data) detail::put_f32(out, v);
  return out;
}

inline DepthMap decode_depth_map(std::string bytes, const std::string& name = "depth map") {
  detail::ByteReader in(std::move(bytes), name);
  in.expect_magic(kDepthMagic);
  if (in.u32() != 1) throw LoadError(name + ": unsupported version");
  const int w = int(in.u32());
  const int h = int(in.u32());
  if (w <= 0 || h <= 0 || std::size_t(w) * h > (std::size_t(1) << 28)) throw LoadError(name + ": bad size");
  DepthMap d(w, h);
  for (float& v : d.data) v = in.f32();
  in.finish();
  return d;
}

inline void save_depth_map(const std::string& path, const DepthMap& d) { write_file(path, encode_depth_map(d)); }
inline DepthMap load_depth_map(const std::string& path) { return decode_depth_map(read_file(path), path); }

}  // namespace nerfsup
