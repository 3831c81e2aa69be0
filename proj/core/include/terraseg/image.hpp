#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace terraseg {

/// Planar float image: data[c * h * w + y * w + x], values nominally in [0, 1].
struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;
    std::vector<float> data;

    static Image zeros(std::size_t h, std::size_t w, std::size_t c) {
        Image im;
        im.height = h;
        im.width = w;
        im.channels = c;
        im.data.assign(h * w * c, 0.0f);
        return im;
    }

    float& at(std::size_t c, std::size_t y, std::size_t x) {
        return data[(c * height + y) * width + x];
    }
    float at(std::size_t c, std::size_t y, std::size_t x) const {
        return data[(c * height + y) * width + x];
    }
    const float* plane(std::size_t c) const { return data.data() + c * height * width; }
    float* plane(std::size_t c) { return data.data() + c * height * width; }
    std::size_t pixels() const { return height * width; }
};

/// Properties of a PNG file before any decode-time transformation.
struct PngMeta {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;
    std::size_t bit_depth = 0;
};

/// Decodes an 8-bit PNG as grayscale (1 channel) or colour (3 channels),
/// scaling samples to [0, 1]. 16-bit files are reduced to 8 bits and any
/// alpha channel is dropped. When `meta` is non-null it receives the
/// original (pre-transform) file properties.
Image read_png(const std::filesystem::path& path, PngMeta* meta = nullptr);

/// Encodes a 1- or 3-channel image as an 8-bit PNG; values are clamped to
/// [0, 1] and rounded to the nearest byte.
void write_png(const std::filesystem::path& path, const Image& image);

/// Reduces a colour image to one luminance channel (Rec. 601 weights);
/// single-channel images pass through unchanged.
Image to_grayscale(const Image& image);

/// Replicates a single-channel image across three identical channels;
/// three-channel images pass through unchanged.
Image to_rgb(const Image& image);

}  // namespace terraseg
