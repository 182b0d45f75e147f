#ifndef PHOTOMASK_IO_TRAJECTORY_HPP
#define PHOTOMASK_IO_TRAJECTORY_HPP

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "photomask/error.hpp"
#include "photomask/geometry.hpp"

namespace photomask::io {

/// One pose per line: 12 whitespace-separated numbers, the row-major 3×4 matrix [R|t].
/// Values use 17 significant digits, so a write/read round trip is exact.
inline std::string format_trajectory(const std::vector<Pose>& poses) {
  std::string out;
  char buf[32];
  for (const auto& p : poses) {
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 4; ++c) {
        const double v = c < 3 ? p.rotation(r, c) : p.translation(r);
        std::snprintf(buf, sizeof buf, "%.17g", v);
        if (r + c > 0) out += ' ';
        out += buf;
      }
    }
    out += '\n';
  }
  return out;
}

/// Blank lines are skipped; any other line must hold exactly 12 finite numbers.
inline std::vector<Pose> parse_trajectory(const std::string& text, const std::string& origin = "trajectory") {
  std::vector<Pose> poses;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    std::vector<double> v;
    std::string tok;
    while (ls >> tok) {
      std::size_t used = 0;
      double x = 0.0;
      try {
        x = std::stod(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tok.size() || !std::isfinite(x))
        throw Error(Errc::io, origin + ":" + std::to_string(lineno) + ": '" + tok + "' is not a number");
      v.push_back(x);
    }
    if (v.size() != 12)
      throw Error(Errc::io, origin + ":" + std::to_string(lineno) + ": expected 12 values, found " + std::to_string(v.size()));
    Pose p;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) p.rotation(r, c) = v[4 * r + c];
      p.translation(r) = v[4 * r + 3];
    }
    poses.push_back(p);
  }
  return poses;
}

inline std::vector<Pose> read_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_trajectory(ss.str(), path);
}

}  // namespace photomask::io

#endif  // PHOTOMASK_IO_TRAJECTORY_HPP
