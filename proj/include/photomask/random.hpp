#ifndef PHOTOMASK_RANDOM_HPP
#define PHOTOMASK_RANDOM_HPP

#include <random>

namespace photomask::detail {

/// Uniform double in [0,1) from the top 53 bits; avoids implementation-defined distributions.
inline double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace photomask::detail

#endif  // PHOTOMASK_RANDOM_HPP
