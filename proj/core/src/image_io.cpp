#include "terraseg/image.hpp"

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>

#include "terraseg/errors.hpp"

namespace terraseg {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_error_thrower(png_structp png, png_const_charp msg) {
    (void)png;
    throw FormatError(std::string("png: ") + (msg ? msg : "unknown error"));
}

void png_warning_sink(png_structp, png_const_charp) {}

}  // namespace

Image read_png(const std::filesystem::path& path, PngMeta* meta) {
    FilePtr file(std::fopen(path.string().c_str(), "rb"));
    if (!file) throw IoError("cannot open '" + path.string() + "' for reading");

    png_structp png =
        png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_thrower, png_warning_sink);
    if (!png) throw IoError("png: failed to allocate read state");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("png: failed to allocate info state");
    }

    Image image;
    try {
        png_init_io(png, file.get());
        png_read_info(png, info);

        if (meta) {
            meta->height = png_get_image_height(png, info);
            meta->width = png_get_image_width(png, info);
            meta->channels = png_get_channels(png, info);
            meta->bit_depth = png_get_bit_depth(png, info);
        }

        png_set_strip_16(png);
        png_set_packing(png);
        const png_byte color = png_get_color_type(png, info);
        if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
        if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8)
            png_set_expand_gray_1_2_4_to_8(png);
        if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
        png_set_strip_alpha(png);
        (void)png_set_interlace_handling(png);
        png_read_update_info(png, info);

        const std::size_t h = png_get_image_height(png, info);
        const std::size_t w = png_get_image_width(png, info);
        const std::size_t ch = png_get_channels(png, info);
        if (ch != 1 && ch != 3)
            throw FormatError("png: unsupported channel count " + std::to_string(ch) + " in '" +
                              path.string() + "'");

        std::vector<png_byte> raster(h * w * ch);
        std::vector<png_bytep> rows(h);
        for (std::size_t y = 0; y < h; ++y) rows[y] = raster.data() + y * w * ch;
        png_read_image(png, rows.data());
        png_read_end(png, nullptr);

        image = Image::zeros(h, w, ch);
        constexpr float kInv255 = 1.0f / 255.0f;
        for (std::size_t c = 0; c < ch; ++c) {
            float* plane = image.plane(c);
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x)
                    plane[y * w + x] = static_cast<float>(raster[(y * w + x) * ch + c]) * kInv255;
        }
    } catch (...) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return image;
}

void write_png(const std::filesystem::path& path, const Image& image) {
    if (image.channels != 1 && image.channels != 3)
        throw UsageError("write_png: image must have 1 or 3 channels, got " +
                         std::to_string(image.channels));
    if (image.height == 0 || image.width == 0) throw UsageError("write_png: empty image");

    FilePtr file(std::fopen(path.string().c_str(), "wb"));
    if (!file) throw IoError("cannot open '" + path.string() + "' for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_thrower,
                                              png_warning_sink);
    if (!png) throw IoError("png: failed to allocate write state");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("png: failed to allocate info state");
    }

    try {
        png_init_io(png, file.get());
        const int color = image.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
        png_set_IHDR(png, info, static_cast<png_uint_32>(image.width),
                     static_cast<png_uint_32>(image.height), 8, color, PNG_INTERLACE_NONE,
                     PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);

        const std::size_t h = image.height, w = image.width, ch = image.channels;
        std::vector<png_byte> row(w * ch);
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                for (std::size_t c = 0; c < ch; ++c) {
                    float v = image.at(c, y, x);
                    v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
                    row[x * ch + c] = static_cast<png_byte>(std::lround(v * 255.0f));
                }
            }
            png_write_row(png, row.data());
        }
        png_write_end(png, nullptr);
    } catch (...) {
        png_destroy_write_struct(&png, &info);
        throw;
    }
    png_destroy_write_struct(&png, &info);
}

Image to_grayscale(const Image& image) {
    if (image.channels == 1) return image;
    if (image.channels != 3)
        throw UsageError("to_grayscale: expected 1 or 3 channels, got " +
                         std::to_string(image.channels));
    Image out = Image::zeros(image.height, image.width, 1);
    const float* r = image.plane(0);
    const float* g = image.plane(1);
    const float* b = image.plane(2);
    for (std::size_t i = 0; i < image.pixels(); ++i)
        out.data[i] = 0.299f * r[i] + 0.587f * g[i] + 0.114f * b[i];
    return out;
}

Image to_rgb(const Image& image) {
    if (image.channels == 3) return image;
    if (image.channels != 1)
        throw UsageError("to_rgb: expected 1 or 3 channels, got " +
                         std::to_string(image.channels));
    Image out = Image::zeros(image.height, image.width, 3);
    for (std::size_t c = 0; c < 3; ++c)
        std::copy(image.data.begin(), image.data.end(), out.plane(c));
    return out;
}

}  // namespace terraseg
