#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace camoseg {

// Binary PGM (P5) / PPM (P6) at maxval 255. Codec-free and bit-exact; used
// for dataset images, GT masks and prediction dumps.
struct GrayImage {
    std::size_t width = 0, height = 0;
    std::vector<std::uint8_t> pixels;  // row-major
};

struct RgbImage {
    std::size_t width = 0, height = 0;
    std::vector<std::uint8_t> pixels;  // row-major, interleaved rgb
};

void write_pgm(const std::string& path, const GrayImage& img);
void write_ppm(const std::string& path, const RgbImage& img);
GrayImage read_pgm(const std::string& path);
RgbImage read_ppm(const std::string& path);

}  // namespace camoseg
