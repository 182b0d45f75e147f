#ifndef PHOTOMASK_IMAGE_HPP
#define PHOTOMASK_IMAGE_HPP

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "photomask/error.hpp"

namespace photomask {

/// Dense row-major H×W grid of scalars.
template <typename T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  Grid(int width, int height, T fill = T{})
      : width_(width), height_(height), data_(checked_size(width, height), fill) {}

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(int x, int y) { return data_[index(x, y)]; }
  const T& operator()(int x, int y) const { return data_[index(x, y)]; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  bool same_shape(const Grid& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_;
  }

  template <typename U>
  bool same_shape(const Grid<U>& other) const noexcept {
    return width_ == other.width() && height_ == other.height();
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  static std::size_t checked_size(int width, int height) {
    if (width < 0 || height < 0) throw Error(Errc::bad_shape, "negative grid dimensions");
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }

  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

/// Boolean validity mask stored as 0/1 bytes.
using MaskMap = Grid<std::uint8_t>;
/// Per-pixel inverse depth (1/m).
using InverseDepthMap = Grid<double>;
/// Per-pixel integer tag (motion-pattern labels).
using LabelMap = Grid<std::uint8_t>;

inline std::size_t count_true(const MaskMap& mask) {
  return static_cast<std::size_t>(std::count_if(mask.values().begin(), mask.values().end(),
                                                [](std::uint8_t v) { return v != 0; }));
}

/// H×W×C intensities, interleaved per pixel. Values are expected in [0,1].
class ImageBuffer {
 public:
  ImageBuffer() = default;
  ImageBuffer(int width, int height, int channels, double fill = 0.0)
      : width_(width), height_(height), channels_(channels) {
    if (width < 0 || height < 0 || channels < 1) throw Error(Errc::bad_shape, "invalid image shape");
    data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(int x, int y, int c = 0) { return data_[index(x, y, c)]; }
  double operator()(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }

  std::span<double> pixel(int x, int y) {
    return {data_.data() + index(x, y, 0), static_cast<std::size_t>(channels_)};
  }
  std::span<const double> pixel(int x, int y) const {
    return {data_.data() + index(x, y, 0), static_cast<std::size_t>(channels_)};
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  bool same_shape(const ImageBuffer& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
  }

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

 private:
  std::size_t index(int x, int y, int c) const noexcept {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

/// Metric depth with an explicit validity mask.
struct DepthMap {
  Grid<double> values;
  MaskMap valid;

  DepthMap() = default;
  DepthMap(int width, int height, double fill = 0.0, bool is_valid = false)
      : values(width, height, fill), valid(width, height, is_valid ? 1 : 0) {}

  int width() const noexcept { return values.width(); }
  int height() const noexcept { return values.height(); }

  friend bool operator==(const DepthMap&, const DepthMap&) = default;
};

struct DepthLimits {
  double min_depth = 0.1;
  double max_depth = 100.0;
};

/// Clears validity wherever depth falls outside the configured caps.
inline void enforce_depth_limits(DepthMap& depth, const DepthLimits& limits = {}) {
  for (std::size_t i = 0; i < depth.values.size(); ++i) {
    const double d = depth.values[i];
    if (!(d >= limits.min_depth && d <= limits.max_depth)) depth.valid[i] = 0;
  }
}

inline DepthMap depth_from_inverse(const InverseDepthMap& inv) {
  DepthMap out(inv.width(), inv.height());
  for (std::size_t i = 0; i < inv.size(); ++i) {
    if (inv[i] > 0.0) {
      out.values[i] = 1.0 / inv[i];
      out.valid[i] = 1;
    }
  }
  return out;
}

inline InverseDepthMap inverse_from_depth(const DepthMap& depth) {
  InverseDepthMap out(depth.width(), depth.height(), 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (depth.valid[i] && depth.values[i] > 0.0) out[i] = 1.0 / depth.values[i];
  }
  return out;
}

}  // namespace photomask

#endif  // PHOTOMASK_IMAGE_HPP
