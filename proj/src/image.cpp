#include "countlab/image.hpp"

#include <fstream>
#include <sstream>

#include "countlab/common.hpp"

namespace countlab {

Image::Image(int w, int h, int c, std::uint8_t fill)
    : width(w), height(h), channels(c),
      data(static_cast<std::size_t>(w) * h * c, fill) {
    check_config(w > 0 && h > 0, "image dimensions must be positive");
    check_config(c == 1 || c == 3, "image must have 1 or 3 channels");
}

std::vector<std::uint8_t> encode_netpbm(const Image& img) {
    std::ostringstream head;
    head << (img.channels == 1 ? "P5" : "P6") << "\n"
         << img.width << " " << img.height << "\n255\n";
    std::string h = head.str();
    std::vector<std::uint8_t> out(h.begin(), h.end());
    out.insert(out.end(), img.data.begin(), img.data.end());
    return out;
}

void write_netpbm(const Image& img, const std::string& path) {
    auto bytes = encode_netpbm(img);
    std::ofstream out(path, std::ios::binary);
    check_data(out.good(), "cannot open for writing: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    check_data(out.good(), "short write: " + path);
}

Image read_netpbm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    check_data(in.good(), "cannot open image: " + path);
    std::string magic;
    in >> magic;
    check_data(magic == "P5" || magic == "P6", "unsupported netpbm magic in " + path);
    int w = 0, h = 0, maxval = 0;
    in >> w >> h >> maxval;
    check_data(w > 0 && h > 0, "bad image dimensions in " + path);
    check_data(maxval == 255, "expected maxval 255 in " + path);
    in.get();  // single whitespace after header
    Image img(w, h, magic == "P5" ? 1 : 3, 0);
    in.read(reinterpret_cast<char*>(img.data.data()),
            static_cast<std::streamsize>(img.data.size()));
    check_data(static_cast<std::size_t>(in.gcount()) == img.data.size(),
               "truncated image data in " + path);
    return img;
}

std::string netpbm_extension(const Image& img) {
    return img.channels == 1 ? "pgm" : "ppm";
}

}  // namespace countlab
