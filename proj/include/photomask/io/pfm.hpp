#ifndef PHOTOMASK_IO_PFM_HPP
#define PHOTOMASK_IO_PFM_HPP

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "photomask/error.hpp"
#include "photomask/image.hpp"

namespace photomask::io {

namespace detail {

inline std::uint32_t byteswap32(std::uint32_t v) {
  return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
}

inline std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return byteswap32(v);
}

}  // namespace detail

/// Single-channel little-endian PFM ("Pf", scale −1), rows stored bottom to top. Invalid
/// pixels are written as 0.
inline void write_pfm(const std::string& path, const DepthMap& d) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io, "cannot open '" + path + "'");
  out << "Pf\n" << d.width() << ' ' << d.height() << "\n-1.0\n";
  std::vector<char> row(static_cast<std::size_t>(d.width()) * 4);
  for (int y = d.height() - 1; y >= 0; --y) {
    for (int x = 0; x < d.width(); ++x) {
      const float f = d.valid(x, y) ? static_cast<float>(d.values(x, y)) : 0.0f;
      const std::uint32_t bits = detail::to_little_endian(std::bit_cast<std::uint32_t>(f));
      std::memcpy(row.data() + 4 * x, &bits, 4);
    }
    out.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw Error(Errc::io, "failed writing '" + path + "'");
}

/// Reads "Pf" files of either endianness; positive finite values are valid depths.
inline DepthMap read_pfm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open '" + path + "'");
  std::string magic;
  int w = 0, h = 0;
  double scale = 0.0;
  in >> magic >> w >> h >> scale;
  if (magic != "Pf") throw Error(Errc::io, "'" + path + "' is not a single-channel PFM");
  if (!in || w <= 0 || h <= 0 || scale == 0.0) throw Error(Errc::io, "'" + path + "' has a malformed PFM header");
  in.get();  // the single whitespace byte ending the header
  const bool little = scale < 0.0;
  std::vector<char> buf(static_cast<std::size_t>(w) * h * 4);
  in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size())) throw Error(Errc::io, "'" + path + "' is truncated");
  DepthMap d(w, h);
  for (int row = 0; row < h; ++row) {
    const int y = h - 1 - row;
    for (int x = 0; x < w; ++x) {
      std::uint32_t bits;
      std::memcpy(&bits, buf.data() + 4 * (static_cast<std::size_t>(row) * w + x), 4);
      if (little != (std::endian::native == std::endian::little)) bits = detail::byteswap32(bits);
      const double v = std::bit_cast<float>(bits);
      if (std::isfinite(v) && v > 0.0) {
        d.values(x, y) = v;
        d.valid(x, y) = 1;
      }
    }
  }
  return d;
}

}  // namespace photomask::io

#endif  // PHOTOMASK_IO_PFM_HPP
