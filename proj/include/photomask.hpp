#ifndef PHOTOMASK_HPP
#define PHOTOMASK_HPP

#include "photomask/bundle.hpp"
#include "photomask/error.hpp"
#include "photomask/evaluation.hpp"
#include "photomask/geometry.hpp"
#include "photomask/image.hpp"
#include "photomask/io/files.hpp"
#include "photomask/io/pfm.hpp"
#include "photomask/io/png.hpp"
#include "photomask/io/serialize.hpp"
#include "photomask/io/trajectory.hpp"
#include "photomask/masking.hpp"
#include "photomask/optimizer.hpp"
#include "photomask/photometric.hpp"
#include "photomask/scenesim.hpp"
#include "photomask/warp.hpp"

#endif  // PHOTOMASK_HPP
