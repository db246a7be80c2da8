#include "fpp/image.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace fpp {

namespace {

static_assert(sizeof(float) == 4, "FPI1 requires 32-bit floats");

// The format is little-endian on disk; byte-swap when the host is not.
void swap_if_big_endian(std::vector<float>& v) {
    if constexpr (std::endian::native == std::endian::big) {
        for (float& f : v) {
            uint32_t u;
            std::memcpy(&u, &f, 4);
            u = __builtin_bswap32(u);
            std::memcpy(&f, &u, 4);
        }
    }
}

}  // namespace

void write_fpi(const std::string& path, const ImageF& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_fpi: cannot open " + path);
    out << "FPI1 " << img.width << " " << img.height << " " << img.channels << "\n";
    std::vector<float> buf = img.data;
    swap_if_big_endian(buf);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!out) throw std::runtime_error("write_fpi: short write to " + path);
}

ImageF read_fpi(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_fpi: cannot open " + path);
    std::string magic;
    int w = 0, h = 0, c = 0;
    in >> magic >> w >> h >> c;
    if (magic != "FPI1" || w <= 0 || h <= 0 || c <= 0)
        throw std::runtime_error("read_fpi: bad FPI1 header in " + path);
    in.get();  // consume the '\n' terminating the header
    ImageF img(w, h, c);
    in.read(reinterpret_cast<char*>(img.data.data()),
            static_cast<std::streamsize>(img.data.size() * sizeof(float)));
    if (!in) throw std::runtime_error("read_fpi: truncated payload in " + path);
    swap_if_big_endian(img.data);
    return img;
}

void write_fpi(const std::string& path, const ImageD& img) { write_fpi(path, img.cast<float>()); }

void write_fpi_mask(const std::string& path, const MaskImage& mask) {
    write_fpi(path, mask.cast<float>());
}

ImageD read_fpi_double(const std::string& path) { return read_fpi(path).cast<double>(); }

MaskImage read_fpi_mask(const std::string& path) {
    ImageF f = read_fpi(path);
    MaskImage m(f.width, f.height, f.channels);
    for (size_t i = 0; i < f.data.size(); ++i) m.data[i] = f.data[i] > 0.5f ? 1 : 0;
    return m;
}

}  // namespace fpp
