#ifndef PHOTOMASK_BUNDLE_HPP
#define PHOTOMASK_BUNDLE_HPP

#include <vector>

#include "photomask/geometry.hpp"
#include "photomask/image.hpp"
#include "photomask/photometric.hpp"

namespace photomask {

/// One target frame, its source frames and intrinsics, with per-scale pyramids.
class SampleBundle {
 public:
  SampleBundle() = default;

  SampleBundle(ImageBuffer target, std::vector<ImageBuffer> sources, const Intrinsics& k, int scales)
      : intrinsics_(k), scales_(scales) {
    k.validate();
    if (sources.empty()) throw Error(Errc::invalid_argument, "bundle needs at least one source frame");
    if (target.width() != k.width || target.height() != k.height)
      throw Error(Errc::bad_shape, "target image does not match intrinsics");
    for (const auto& s : sources)
      if (!s.same_shape(target)) throw Error(Errc::bad_shape, "source image differs from target");
    target_ = build_pyramid(target, scales);
    for (const auto& s : sources) sources_.push_back(build_pyramid(s, scales));
  }

  int scales() const noexcept { return scales_; }
  int num_sources() const noexcept { return static_cast<int>(sources_.size()); }
  const Intrinsics& intrinsics() const noexcept { return intrinsics_; }
  Intrinsics intrinsics(int scale) const { return intrinsics_.scaled(scale); }
  const ImageBuffer& target(int scale = 0) const { return target_.at(scale); }
  const ImageBuffer& source(int index, int scale = 0) const { return sources_.at(index).at(scale); }

  /// Same frames with the source order permuted.
  SampleBundle reordered(const std::vector<int>& order) const {
    SampleBundle out = *this;
    out.sources_.clear();
    for (int i : order) out.sources_.push_back(sources_.at(i));
    return out;
  }

 private:
  Intrinsics intrinsics_;
  int scales_ = 1;
  std::vector<ImageBuffer> target_;
  std::vector<std::vector<ImageBuffer>> sources_;
};

}  // namespace photomask

#endif  // PHOTOMASK_BUNDLE_HPP
