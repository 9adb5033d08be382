#pragma once

#include <string>

#include "dpwavelet/types.hpp"

namespace dpw::imageio {

// Binary PGM (P5, channels == 1) or PPM (P6, channels == 3), 8-bit.
// Samples are mapped [0,1] <-> [0,255] with rounding and clamping on write.
void write_image(const std::string& path, const ImageTensor& image);
ImageTensor read_image(const std::string& path);

}  // namespace dpw::imageio
