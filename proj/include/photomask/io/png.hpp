#ifndef PHOTOMASK_IO_PNG_HPP
#define PHOTOMASK_IO_PNG_HPP

#include <png.h>

#include <algorithm>
#include <csetjmp>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "photomask/error.hpp"
#include "photomask/image.hpp"

namespace photomask::io {

/// Raw PNG raster: 8- or 16-bit samples, 1 (gray) or 3 (RGB) channels, row-major interleaved.
struct PngRaster {
  int width = 0;
  int height = 0;
  int channels = 1;
  int bit_depth = 8;
  std::vector<std::uint16_t> samples;
};

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const std::string& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw Error(Errc::io, "cannot open '" + path + "'");
  return f;
}

// libpng reports errors by longjmp; the message is carried out and rethrown as an Error once
// control is back in C++ frames.
struct PngErrorContext {
  std::jmp_buf jump;
  char message[256] = {};
};

[[noreturn]] inline void png_fail(png_structp png, png_const_charp msg) {
  auto* ctx = static_cast<PngErrorContext*>(png_get_error_ptr(png));
  std::snprintf(ctx->message, sizeof ctx->message, "%s", msg);
  std::longjmp(ctx->jump, 1);
}

inline void png_warn(png_structp, png_const_charp) {}

// The setjmp frames below touch only plain C data: no C++ object lives across a longjmp.

inline bool write_rows(png_structp png, png_infop info, std::FILE* file, png_uint_32 w, png_uint_32 h, int depth,
                       int color, png_bytepp rows) {
  auto* ctx = static_cast<PngErrorContext*>(png_get_error_ptr(png));
  if (setjmp(ctx->jump)) return false;
  png_init_io(png, file);
  png_set_IHDR(png, info, w, h, depth, color, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows);
  png_write_end(png, nullptr);
  return true;
}

struct PngHeader {
  png_uint_32 width;
  png_uint_32 height;
  int bit_depth;
  int channels;
  png_size_t rowbytes;
};

inline bool read_header(png_structp png, png_infop info, std::FILE* file, PngHeader* h) {
  auto* ctx = static_cast<PngErrorContext*>(png_get_error_ptr(png));
  if (setjmp(ctx->jump)) return false;
  png_init_io(png, file);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  h->width = png_get_image_width(png, info);
  h->height = png_get_image_height(png, info);
  h->bit_depth = png_get_bit_depth(png, info);
  h->channels = png_get_channels(png, info);
  h->rowbytes = png_get_rowbytes(png, info);
  return true;
}

inline bool read_rows(png_structp png, png_bytepp rows) {
  auto* ctx = static_cast<PngErrorContext*>(png_get_error_ptr(png));
  if (setjmp(ctx->jump)) return false;
  png_read_image(png, rows);
  png_read_end(png, nullptr);
  return true;
}

}  // namespace detail

/// Writes without timestamps or text chunks so identical rasters give identical files.
inline void write_png(const std::string& path, const PngRaster& r) {
  if (r.width <= 0 || r.height <= 0 || (r.channels != 1 && r.channels != 3) ||
      (r.bit_depth != 8 && r.bit_depth != 16) ||
      r.samples.size() != static_cast<std::size_t>(r.width) * r.height * r.channels)
    throw Error(Errc::invalid_argument, "malformed raster for '" + path + "'");
  const std::size_t row_samples = static_cast<std::size_t>(r.width) * r.channels;
  const std::size_t bytes = r.bit_depth / 8;
  std::vector<png_byte> data(row_samples * bytes * r.height);
  for (std::size_t i = 0; i < r.samples.size(); ++i) {
    if (bytes == 1) {
      data[i] = static_cast<png_byte>(r.samples[i]);
    } else {
      data[2 * i] = static_cast<png_byte>(r.samples[i] >> 8);  // PNG stores 16-bit samples big-endian
      data[2 * i + 1] = static_cast<png_byte>(r.samples[i] & 0xFF);
    }
  }
  std::vector<png_bytep> rows(r.height);
  for (int y = 0; y < r.height; ++y) rows[y] = data.data() + y * row_samples * bytes;

  auto file = detail::open_file(path, "wb");
  detail::PngErrorContext ctx;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &ctx, detail::png_fail, detail::png_warn);
  if (!png) throw Error(Errc::io, "png: out of memory");
  png_infop info = png_create_info_struct(png);
  const bool ok = info && detail::write_rows(png, info, file.get(), r.width, r.height, r.bit_depth,
                                             r.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, rows.data());
  png_destroy_write_struct(&png, &info);
  if (!ok) throw Error(Errc::io, "png: cannot write '" + path + "': " + ctx.message);
  if (std::fflush(file.get()) != 0) throw Error(Errc::io, "cannot flush '" + path + "'");
}

/// Reads gray, gray+alpha, RGB, RGBA or palette PNGs; alpha is dropped and palettes expanded.
inline PngRaster read_png(const std::string& path) {
  auto file = detail::open_file(path, "rb");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw Error(Errc::io, "'" + path + "' is not a PNG file");
  detail::PngErrorContext ctx;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &ctx, detail::png_fail, detail::png_warn);
  if (!png) throw Error(Errc::io, "png: out of memory");
  png_infop info = png_create_info_struct(png);
  detail::PngHeader h{};
  if (!info || !detail::read_header(png, info, file.get(), &h)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(Errc::io, "png: cannot read '" + path + "': " + ctx.message);
  }
  if (h.channels != 1 && h.channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(Errc::io, "'" + path + "' has an unsupported channel layout");
  }
  std::vector<png_byte> data(h.rowbytes * h.height);
  std::vector<png_bytep> rows(h.height);
  for (png_uint_32 y = 0; y < h.height; ++y) rows[y] = data.data() + y * h.rowbytes;
  const bool ok = detail::read_rows(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  if (!ok) throw Error(Errc::io, "png: cannot read '" + path + "': " + ctx.message);

  PngRaster r{static_cast<int>(h.width), static_cast<int>(h.height), h.channels, h.bit_depth, {}};
  const std::size_t row_samples = static_cast<std::size_t>(r.width) * r.channels;
  r.samples.resize(row_samples * r.height);
  for (int y = 0; y < r.height; ++y) {
    const png_byte* row = rows[y];
    std::uint16_t* dst = r.samples.data() + y * row_samples;
    for (std::size_t i = 0; i < row_samples; ++i)
      dst[i] = r.bit_depth == 16 ? static_cast<std::uint16_t>((row[2 * i] << 8) | row[2 * i + 1]) : row[i];
  }
  return r;
}

/// Intensities in [0,1] quantized to 8 or 16 bits (round to nearest, clamped).
inline void write_image_png(const std::string& path, const ImageBuffer& img, int bit_depth = 8) {
  if (img.channels() != 1 && img.channels() != 3) throw Error(Errc::invalid_argument, "PNG images need 1 or 3 channels");
  const double full = bit_depth == 16 ? 65535.0 : 255.0;
  PngRaster r{img.width(), img.height(), img.channels(), bit_depth, {}};
  r.samples.reserve(img.values().size());
  for (double v : img.values()) r.samples.push_back(static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * full)));
  write_png(path, r);
}

inline ImageBuffer read_image_png(const std::string& path) {
  const PngRaster r = read_png(path);
  ImageBuffer img(r.width, r.height, r.channels);
  const double full = r.bit_depth == 16 ? 65535.0 : 255.0;
  for (std::size_t i = 0; i < r.samples.size(); ++i) img.values()[i] = r.samples[i] / full;
  return img;
}

/// 8-bit single-channel map written verbatim (labels).
inline void write_gray_png(const std::string& path, const Grid<std::uint8_t>& g) {
  PngRaster r{g.width(), g.height(), 1, 8, {}};
  r.samples.assign(g.values().begin(), g.values().end());
  write_png(path, r);
}

inline Grid<std::uint8_t> read_gray_png(const std::string& path) {
  const PngRaster r = read_png(path);
  if (r.channels != 1 || r.bit_depth != 8) throw Error(Errc::io, "'" + path + "' is not an 8-bit gray PNG");
  Grid<std::uint8_t> g(r.width, r.height);
  for (std::size_t i = 0; i < r.samples.size(); ++i) g[i] = static_cast<std::uint8_t>(r.samples[i]);
  return g;
}

/// Masks as 0/255.
inline void write_mask_png(const std::string& path, const MaskMap& m) {
  PngRaster r{m.width(), m.height(), 1, 8, {}};
  for (auto v : m.values()) r.samples.push_back(v ? 255 : 0);
  write_png(path, r);
}

/// Any nonzero sample counts as kept.
inline MaskMap read_mask_png(const std::string& path) {
  const PngRaster r = read_png(path);
  if (r.channels != 1) throw Error(Errc::io, "'" + path + "' is not a single-channel mask");
  MaskMap m(r.width, r.height);
  for (std::size_t i = 0; i < r.samples.size(); ++i) m[i] = r.samples[i] != 0;
  return m;
}

/// 16-bit depth, value = round(meters·256), 0 = invalid. Depths beyond 65535/256 m saturate.
inline void write_depth_png(const std::string& path, const DepthMap& d) {
  PngRaster r{d.width(), d.height(), 1, 16, {}};
  r.samples.reserve(d.values.size());
  for (std::size_t i = 0; i < d.values.size(); ++i) {
    const double v = d.valid[i] ? std::clamp(std::round(d.values[i] * 256.0), 1.0, 65535.0) : 0.0;
    r.samples.push_back(static_cast<std::uint16_t>(v));
  }
  write_png(path, r);
}

inline DepthMap read_depth_png(const std::string& path) {
  const PngRaster r = read_png(path);
  if (r.channels != 1 || r.bit_depth != 16) throw Error(Errc::io, "'" + path + "' is not a 16-bit gray PNG");
  DepthMap d(r.width, r.height);
  for (std::size_t i = 0; i < r.samples.size(); ++i) {
    if (r.samples[i] == 0) continue;
    d.values[i] = r.samples[i] / 256.0;
    d.valid[i] = 1;
  }
  return d;
}

/// Error map as an 8-bit heatmap normalized by `scale` (values ≥ scale saturate to 255).
inline void write_heatmap_png(const std::string& path, const Grid<double>& values, double scale) {
  PngRaster r{values.width(), values.height(), 1, 8, {}};
  for (double v : values.values()) {
    const double t = scale > 0.0 ? std::clamp(v / scale, 0.0, 1.0) : 0.0;
    r.samples.push_back(static_cast<std::uint16_t>(std::lround(t * 255.0)));
  }
  write_png(path, r);
}

}  // namespace photomask::io

#endif  // PHOTOMASK_IO_PNG_HPP
