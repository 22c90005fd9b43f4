/* Copyright 2026 The mmdnet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "mmdnet/errors.hpp"
#include "mmdnet/tensor.hpp"

namespace mmdnet {

inline constexpr std::size_t kDefaultImageSide = 224;

/// Decoded 8-bit image, interleaved rows, 1 (gray) or 3 (RGB) channels.
struct Image8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> pixels;
};

enum class ImageFormat { png, jpeg, unknown };

inline ImageFormat sniff_format(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path.string());
  std::array<unsigned char, 8> head{};
  in.read(reinterpret_cast<char*>(head.data()), head.size());
  const auto got = static_cast<std::size_t>(in.gcount());
  static constexpr std::array<unsigned char, 8> kPng{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (got == 8 && head == kPng) return ImageFormat::png;
  if (got >= 3 && head[0] == 0xff && head[1] == 0xd8 && head[2] == 0xff) return ImageFormat::jpeg;
  return ImageFormat::unknown;
}

inline Image8 decode_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw IoError("cannot decode PNG " + path.string() + ": " + image.message);
  }
  // Read with alpha (if any) kept so nothing gets composited, then drop it.
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGBA : PNG_FORMAT_GA;
  const std::size_t in_channels = color ? 4 : 2;
  std::vector<std::uint8_t> raw(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, raw.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw IoError("cannot decode PNG " + path.string() + ": " + msg);
  }
  Image8 out{image.width, image.height, color ? 3u : 1u, {}};
  out.pixels.resize(out.width * out.height * out.channels);
  for (std::size_t i = 0, n = out.width * out.height; i < n; ++i) {
    for (std::size_t c = 0; c < out.channels; ++c) out.pixels[i * out.channels + c] = raw[i * in_channels + c];
  }
  return out;
}

namespace detail {

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

extern "C" inline void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

}  // namespace detail

inline Image8 decode_jpeg(const std::filesystem::path& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!file) throw IoError("cannot open image " + path.string());

  // Everything that must outlive a longjmp is constructed before setjmp.
  Image8 out;
  std::vector<JSAMPROW> rows;
  jpeg_decompress_struct cinfo{};
  detail::JpegErrorManager err{};
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = detail::jpeg_error_exit;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw IoError("cannot decode JPEG " + path.string() + ": " + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, file.get());
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_start_decompress(&cinfo);
  out.width = cinfo.output_width;
  out.height = cinfo.output_height;
  out.channels = static_cast<std::size_t>(cinfo.output_components);
  out.pixels.resize(out.width * out.height * out.channels);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out.pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * out.width * out.channels;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return out;
}

inline Image8 decode_image(const std::filesystem::path& path) {
  switch (sniff_format(path)) {
    case ImageFormat::png: return decode_png(path);
    case ImageFormat::jpeg: return decode_jpeg(path);
    case ImageFormat::unknown: break;
  }
  throw IoError("unsupported image format (expected PNG or JPEG): " + path.string());
}

/// Writes an 8-bit gray or RGB PNG.
inline void write_png(const std::filesystem::path& path, const Image8& img) {
  if (img.channels != 1 && img.channels != 3) throw IoError("write_png: need 1 or 3 channels for " + path.string());
  if (img.pixels.size() != img.width * img.height * img.channels) throw IoError("write_png: pixel buffer size mismatch");
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = img.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, img.pixels.data(), 0, nullptr)) {
    throw IoError("cannot write PNG " + path.string() + ": " + image.message);
  }
}

/// Bilinear resize with center-aligned sampling: output pixel x samples the
/// source at (x + 0.5) * in/out - 0.5, clamped to the image.
inline std::vector<double> resize_bilinear(const std::vector<double>& src, std::size_t width, std::size_t height,
                                           std::size_t channels, std::size_t out_width, std::size_t out_height) {
  struct Tap {
    std::size_t lo, hi;
    double frac;
  };
  auto taps = [](std::size_t in, std::size_t out) {
    std::vector<Tap> t(out);
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t i = 0; i < out; ++i) {
      double pos = (static_cast<double>(i) + 0.5) * ratio - 0.5;
      pos = std::clamp(pos, 0.0, static_cast<double>(in - 1));
      const auto lo = static_cast<std::size_t>(std::floor(pos));
      t[i] = {lo, std::min(lo + 1, in - 1), pos - static_cast<double>(lo)};
    }
    return t;
  };
  const auto xs = taps(width, out_width);
  const auto ys = taps(height, out_height);
  std::vector<double> out(out_width * out_height * channels);
  for (std::size_t y = 0; y < out_height; ++y) {
    const Tap& ty = ys[y];
    for (std::size_t x = 0; x < out_width; ++x) {
      const Tap& tx = xs[x];
      for (std::size_t c = 0; c < channels; ++c) {
        auto at = [&](std::size_t yy, std::size_t xx) { return src[(yy * width + xx) * channels + c]; };
        const double top = at(ty.lo, tx.lo) * (1.0 - tx.frac) + at(ty.lo, tx.hi) * tx.frac;
        const double bottom = at(ty.hi, tx.lo) * (1.0 - tx.frac) + at(ty.hi, tx.hi) * tx.frac;
        out[(y * out_width + x) * channels + c] = top * (1.0 - ty.frac) + bottom * ty.frac;
      }
    }
  }
  return out;
}

/// Decoded image -> [side,side,3] in [0,1]: gray replicated to RGB, bilinear
/// resize (skipped when already side x side), then divided by 255.
template <typename T>
Tensor<T> preprocess(const Image8& img, std::size_t side = kDefaultImageSide) {
  if (img.channels != 1 && img.channels != 3) throw IoError("preprocess: expected 1 or 3 channels");
  std::vector<double> rgb(img.width * img.height * 3);
  for (std::size_t i = 0, n = img.width * img.height; i < n; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      rgb[i * 3 + c] = static_cast<double>(img.pixels[i * img.channels + (img.channels == 1 ? 0 : c)]);
    }
  }
  if (img.width != side || img.height != side) rgb = resize_bilinear(rgb, img.width, img.height, 3, side, side);
  std::vector<T> values(rgb.size());
  for (std::size_t i = 0; i < rgb.size(); ++i) values[i] = static_cast<T>(rgb[i] / 255.0);
  return Tensor<T>({side, side, 3}, std::move(values));
}

template <typename T>
Tensor<T> load_image(const std::filesystem::path& path, std::size_t side = kDefaultImageSide) {
  return preprocess<T>(decode_image(path), side);
}

}  // namespace mmdnet
