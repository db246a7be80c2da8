#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace fpp {

// Dense row-major, channel-interleaved raster. Channel count is free-form:
// a phase map has c=1, an N-step fringe stack is stored with c=N.
template <typename T>
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<T> data;

    Image() = default;
    Image(int w, int h, int c = 1, T fill = T{})
        : width(w), height(h), channels(c), data(static_cast<size_t>(w) * h * c, fill) {
        if (w <= 0 || h <= 0 || c <= 0)
            throw std::invalid_argument("Image: non-positive dimensions");
    }

    T& at(int x, int y, int ch = 0) {
        return data[(static_cast<size_t>(y) * width + x) * channels + ch];
    }
    const T& at(int x, int y, int ch = 0) const {
        return data[(static_cast<size_t>(y) * width + x) * channels + ch];
    }

    bool contains(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
    size_t pixel_count() const { return static_cast<size_t>(width) * height; }
    template <typename U>
    bool same_size(const Image<U>& o) const {
        return width == o.width && height == o.height;
    }

    template <typename U>
    Image<U> cast() const {
        Image<U> out(width, height, channels);
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

using ImageF = Image<float>;
using ImageD = Image<double>;
using MaskImage = Image<uint8_t>;

// FPI1 container: ASCII header line "FPI1 <width> <height> <channels>\n"
// followed by little-endian float32 samples, row-major, channel-interleaved.
void write_fpi(const std::string& path, const ImageF& img);
ImageF read_fpi(const std::string& path);

// Convenience wrappers converting to/from the on-disk float32 representation.
void write_fpi(const std::string& path, const ImageD& img);
void write_fpi_mask(const std::string& path, const MaskImage& mask);
ImageD read_fpi_double(const std::string& path);
MaskImage read_fpi_mask(const std::string& path);

}  // namespace fpp
