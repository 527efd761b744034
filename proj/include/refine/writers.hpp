#pragma once

#include <string>

#include "refine/rendering.hpp"

namespace refine {

/// ASCII PLY with float x y z nx ny nz and uchar red green blue. Points
/// without colors are written light gray.
void write_ply(const std::string& path, const OrientedPoints& points);
void write_ply(std::ostream& out, const OrientedPoints& points);

/// Binary PPM (P6, maxval 255); channels are clamped to [0, 1] and rounded.
void write_ppm(const std::string& path, const Image& image);
Image read_ppm(const std::string& path);

}  // namespace refine
