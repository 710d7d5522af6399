#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace countlab {

// 8-bit raster, row-major, channels interleaved. channels is 1 (gray) or 3 (RGB).
struct Image {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<std::uint8_t> data;

    Image() = default;
    Image(int w, int h, int c, std::uint8_t fill);

    std::uint8_t& at(int x, int y, int c) {
        return data[static_cast<std::size_t>((y * width + x) * channels + c)];
    }
    std::uint8_t at(int x, int y, int c) const {
        return data[static_cast<std::size_t>((y * width + x) * channels + c)];
    }
    bool operator==(const Image&) const = default;
};

// Binary netpbm, maxval 255: P5 for 1 channel, P6 for 3.
std::vector<std::uint8_t> encode_netpbm(const Image& img);
void write_netpbm(const Image& img, const std::string& path);
Image read_netpbm(const std::string& path);

// File extension matching the encoding ("pgm" or "ppm").
std::string netpbm_extension(const Image& img);

}  // namespace countlab
