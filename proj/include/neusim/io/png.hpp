#pragma once

#include "neusim/render/image.hpp"

#include <string>

namespace neusim::io {

// 8-bit RGB PNG. Values quantize round-to-nearest on write and return as
// v/255.0 on read, so write-then-read is idempotent after one quantization.
void write_png(const std::string& path, const render::Image& img);
render::Image read_png(const std::string& path);

} // namespace neusim::io
