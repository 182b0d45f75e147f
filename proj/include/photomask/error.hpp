#ifndef PHOTOMASK_ERROR_HPP
#define PHOTOMASK_ERROR_HPP

#include <stdexcept>
#include <string>

namespace photomask {

enum class Errc {
  behind_camera,
  out_of_bounds,
  degenerate_depth,
  bad_shape,
  empty_sample,
  fully_masked,
  bad_spec,
  unknown_preset,
  diverged,
  empty_region,
  too_short,
  io,
  invalid_argument,
};

inline const char* errc_name(Errc code) {
  switch (code) {
    case Errc::behind_camera: return "behind-camera";
    case Errc::out_of_bounds: return "out-of-bounds";
    case Errc::degenerate_depth: return "degenerate-depth";
    case Errc::bad_shape: return "bad-shape";
    case Errc::empty_sample: return "empty-sample";
    case Errc::fully_masked: return "fully-masked";
    case Errc::bad_spec: return "bad-spec";
    case Errc::unknown_preset: return "unknown-preset";
    case Errc::diverged: return "diverged";
    case Errc::empty_region: return "empty-region";
    case Errc::too_short: return "too-short";
    case Errc::io: return "io";
    case Errc::invalid_argument: return "invalid-argument";
  }
  return "unknown";
}

/// Library-wide exception; `code()` identifies the failure class.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace photomask

#endif  // PHOTOMASK_ERROR_HPP
