#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace smvit {

// Raster image with values in [0,1], row-major, channel-interleaved.
// channels == 1 for grayscale maps (PGM), 3 for RGB (PPM).
struct Image {
    int rows = 0;
    int cols = 0;
    int channels = 1;
    std::vector<double> data;

    Image() = default;
    Image(int r, int c, int ch)
        : rows(r), cols(c), channels(ch),
          data(static_cast<std::size_t>(r) * c * ch, 0.0) {}

    double& at(int r, int c, int ch = 0) {
        return data[(static_cast<std::size_t>(r) * cols + c) * channels + ch];
    }
    double at(int r, int c, int ch = 0) const {
        return data[(static_cast<std::size_t>(r) * cols + c) * channels + ch];
    }
};

struct NetpbmError : std::runtime_error {
    std::size_t byte_offset;
    NetpbmError(const std::string& msg, std::size_t offset)
        : std::runtime_error(msg + " (byte offset " + std::to_string(offset) + ")"),
          byte_offset(offset) {}
};

// binary PGM "P5" / PPM "P6", 8-bit, maxval must be 255; value = pixel / 255
Image read_pgm(const std::string& path);
Image read_ppm(const std::string& path);
// writes round(value * 255), values clamped to [0,1]
void write_pgm(const std::string& path, const Image& img);
void write_ppm(const std::string& path, const Image& img);

}  // namespace smvit
