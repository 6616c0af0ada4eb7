#pragma once

#include <filesystem>

#include "cardpipe/ocrdecode.hpp"

namespace cardpipe::ocr {

// Raw head tensor fixture format ("DDHEAD01"):
//   8-byte magic "DDHEAD01"
//   u32 scale count (little endian)
//   per scale: u32 rows, u32 cols, then row-major f32 regression tensor
//   (rows*cols*12 values) followed by the f32 score tensor (rows*cols*33).
void write_head_file(const std::filesystem::path& path, const RawHeadOutput& out);

// Reads the tensors and reconstructs the matching geometry (600x375 input,
// 3 anchors, 11 categories, grids from the file). Throws on bad magic,
// truncated data, or trailing bytes.
struct HeadFile {
    HeadGeometry geometry;
    RawHeadOutput output;
};
HeadFile read_head_file(const std::filesystem::path& path);

}  // namespace cardpipe::ocr
