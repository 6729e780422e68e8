#include "camoseg/pnm.hpp"

#include <fstream>
#include <stdexcept>

namespace camoseg {

namespace {

void skip_pnm_whitespace(std::istream& in) {
    int c = in.peek();
    while (c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '#') {
        if (c == '#') {
            std::string comment;
            std::getline(in, comment);
        } else {
            in.get();
        }
        c = in.peek();
    }
}

std::size_t read_pnm_number(std::istream& in, const std::string& path) {
    skip_pnm_whitespace(in);
    std::size_t v = 0;
    if (!(in >> v)) throw std::runtime_error("malformed pnm header: " + path);
    return v;
}

template <typename Img>
Img read_pnm(const std::string& path, const char* magic, std::size_t samples) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    char m0 = 0, m1 = 0;
    in.get(m0).get(m1);
    if (m0 != magic[0] || m1 != magic[1]) {
        throw std::runtime_error(path + ": expected " + magic + " header");
    }
    Img img;
    img.width = read_pnm_number(in, path);
    img.height = read_pnm_number(in, path);
    const std::size_t maxval = read_pnm_number(in, path);
    if (maxval != 255) throw std::runtime_error(path + ": only maxval 255 is supported");
    in.get();  // single whitespace after maxval
    img.pixels.resize(img.width * img.height * samples);
    in.read(reinterpret_cast<char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
        throw std::runtime_error(path + ": truncated pixel data");
    }
    return img;
}

template <typename Img>
void write_pnm(const std::string& path, const Img& img, const char* magic,
               std::size_t samples) {
    if (img.pixels.size() != img.width * img.height * samples) {
        throw std::invalid_argument("pnm write: pixel buffer does not match extents");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << magic << "\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()),
              static_cast<std::streamsize>(img.pixels.size()));
    if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace

void write_pgm(const std::string& path, const GrayImage& img) { write_pnm(path, img, "P5", 1); }
void write_ppm(const std::string& path, const RgbImage& img) { write_pnm(path, img, "P6", 3); }
GrayImage read_pgm(const std::string& path) { return read_pnm<GrayImage>(path, "P5", 1); }
RgbImage read_ppm(const std::string& path) { return read_pnm<RgbImage>(path, "P6", 3); }

}  // namespace camoseg
