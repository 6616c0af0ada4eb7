#pragma once

#include <filesystem>

#include "cardpipe/raster.hpp"

namespace cardpipe::synth {

// 8-bit RGB PNG, non-interlaced, fixed compression settings so identical
// frames produce identical bytes.
void write_png(const std::filesystem::path& path, const RasterFrame& frame);
RasterFrame read_png(const std::filesystem::path& path);

// Binary PPM (P6) fallback.
void write_ppm(const std::filesystem::path& path, const RasterFrame& frame);
RasterFrame read_ppm(const std::filesystem::path& path);

// Dispatch on extension (.png / .ppm).
void write_image(const std::filesystem::path& path, const RasterFrame& frame);
RasterFrame read_image(const std::filesystem::path& path);

}  // namespace cardpipe::synth
