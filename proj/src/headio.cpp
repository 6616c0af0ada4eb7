#include "cardpipe/headio.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace cardpipe::ocr {

namespace {

constexpr char kMagic[8] = {'D', 'D', 'H', 'E', 'A', 'D', '0', '1'};

void put_u32(std::ofstream& os, uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::ifstream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw std::runtime_error("head file: truncated header");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void put_f32(std::ofstream& os, const float* data, size_t count) {
    // Little-endian hosts write the buffer directly.
    static_assert(sizeof(float) == 4);
    os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * 4));
}

void get_f32(std::ifstream& is, float* data, size_t count) {
    if (!is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * 4)))
        throw std::runtime_error("head file: truncated tensor data");
}

}  // namespace

void write_head_file(const std::filesystem::path& path, const RawHeadOutput& out) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("head file: cannot open for writing: " + path.string());
    os.write(kMagic, sizeof(kMagic));
    put_u32(os, static_cast<uint32_t>(out.scales.size()));
    for (const auto& t : out.scales) {
        put_u32(os, static_cast<uint32_t>(t.grid.rows));
        put_u32(os, static_cast<uint32_t>(t.grid.cols));
        put_f32(os, t.regression.data(), static_cast<size_t>(t.regression.size()));
        put_f32(os, t.scores.data(), static_cast<size_t>(t.scores.size()));
    }
    if (!os) throw std::runtime_error("head file: write failed: " + path.string());
}

HeadFile read_head_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("head file: cannot open: " + path.string());
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("head file: bad magic (expected DDHEAD01)");

    HeadFile hf;
    hf.geometry.scales.clear();
    const uint32_t nscales = get_u32(is);
    if (nscales == 0 || nscales > 16) throw std::runtime_error("head file: bad scale count");
    for (uint32_t i = 0; i < nscales; ++i) {
        const uint32_t rows = get_u32(is);
        const uint32_t cols = get_u32(is);
        if (rows == 0 || cols == 0 || rows > 4096 || cols > 4096)
            throw std::runtime_error("head file: bad grid dims");
        GridSize g{static_cast<int>(rows), static_cast<int>(cols)};
        hf.geometry.scales.push_back(g);
        auto t = ScaleTensors::zeros(g, hf.geometry);
        get_f32(is, t.regression.data(), static_cast<size_t>(t.regression.size()));
        get_f32(is, t.scores.data(), static_cast<size_t>(t.scores.size()));
        hf.output.scales.push_back(std::move(t));
    }
    is.peek();
    if (!is.eof()) throw std::runtime_error("head file: trailing bytes after tensors");
    return hf;
}

}  // namespace cardpipe::ocr
