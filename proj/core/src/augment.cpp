#include "terraseg/augment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>

#include "terraseg/errors.hpp"
#include "terraseg/kernels.hpp"
#include "terraseg/rng.hpp"

namespace terraseg {

namespace {

constexpr double kPi = 3.14159265358979323846;

void rebinarize(Image& mask) {
    for (float& v : mask.data) v = v >= 0.5f ? 1.0f : 0.0f;
}

/// Applies `attr_fn` to the five attribute rasters and `mask_fn` to the mask.
FieldStack transform_stack(const FieldStack& in, const std::function<Image(const Image&)>& attr_fn,
                           const std::function<Image(const Image&)>& mask_fn) {
    FieldStack out;
    out.id = in.id;
    for (std::size_t i = 0; i < FieldStack::kAttributeCount; ++i)
        out.attribute(i) = attr_fn(in.attribute(i));
    out.mask = mask_fn(in.mask);
    return out;
}

/// Crop + resize-to-target for a whole stack; masks re-binarised after the
/// bilinear resample.
FieldStack crop_and_fit(const FieldStack& stack, std::size_t y0, std::size_t x0, std::size_t size,
                        std::size_t target) {
    auto attr = [&](const Image& im) {
        Image c = crop(im, y0, x0, size, size);
        return size == target ? c : resize_bilinear(c, target, target);
    };
    auto msk = [&](const Image& im) {
        Image c = crop(im, y0, x0, size, size);
        if (size != target) {
            c = resize_bilinear(c, target, target);
            rebinarize(c);
        }
        return c;
    };
    return transform_stack(stack, attr, msk);
}

}  // namespace

Image crop(const Image& im, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
    if (y0 + h > im.height || x0 + w > im.width)
        throw DimensionError("crop: window " + std::to_string(h) + "x" + std::to_string(w) +
                             " at (" + std::to_string(y0) + "," + std::to_string(x0) +
                             ") exceeds image " + std::to_string(im.height) + "x" +
                             std::to_string(im.width));
    Image out = Image::zeros(h, w, im.channels);
    for (std::size_t c = 0; c < im.channels; ++c)
        for (std::size_t y = 0; y < h; ++y) {
            const float* src = im.plane(c) + (y0 + y) * im.width + x0;
            std::copy_n(src, w, out.plane(c) + y * w);
        }
    return out;
}

Image center_crop(const Image& im, std::size_t size) {
    if (size > im.height || size > im.width)
        throw DimensionError("center_crop: size " + std::to_string(size) + " exceeds image " +
                             std::to_string(im.height) + "x" + std::to_string(im.width));
    return crop(im, (im.height - size) / 2, (im.width - size) / 2, size, size);
}

Image resize_bilinear(const Image& im, std::size_t h, std::size_t w) {
    if (h == 0 || w == 0) throw DimensionError("resize_bilinear: empty target");
    auto ty = kernels::resize_table<float>(im.height, h);
    auto tx = kernels::resize_table<float>(im.width, w);
    Image out = Image::zeros(h, w, im.channels);
    for (std::size_t c = 0; c < im.channels; ++c) {
        const float* plane = im.plane(c);
        float* op = out.plane(c);
        for (std::size_t y = 0; y < h; ++y) {
            const float* r0 = plane + ty.lo[y] * im.width;
            const float* r1 = plane + ty.hi[y] * im.width;
            const float fy = ty.frac[y];
            for (std::size_t x = 0; x < w; ++x) {
                const float top = r0[tx.lo[x]] + tx.frac[x] * (r0[tx.hi[x]] - r0[tx.lo[x]]);
                const float bot = r1[tx.lo[x]] + tx.frac[x] * (r1[tx.hi[x]] - r1[tx.lo[x]]);
                op[y * w + x] = top + fy * (bot - top);
            }
        }
    }
    return out;
}

Image rotate_image(const Image& im, double degrees, bool nearest) {
    const double rad = degrees * kPi / 180.0;
    const double cs = std::cos(rad), sn = std::sin(rad);
    const double cy = (static_cast<double>(im.height) - 1.0) / 2.0;
    const double cx = (static_cast<double>(im.width) - 1.0) / 2.0;
    Image out = Image::zeros(im.height, im.width, im.channels);
    const long hh = static_cast<long>(im.height), ww = static_cast<long>(im.width);
    for (std::size_t y = 0; y < im.height; ++y) {
        for (std::size_t x = 0; x < im.width; ++x) {
            // Inverse map: rotate the output pixel back into source space.
            const double oy = static_cast<double>(y) - cy;
            const double ox = static_cast<double>(x) - cx;
            const double sx = cs * ox - sn * oy + cx;
            const double sy = sn * ox + cs * oy + cy;
            if (nearest) {
                const long iy = std::lround(sy), ix = std::lround(sx);
                if (iy < 0 || ix < 0 || iy >= hh || ix >= ww) continue;
                for (std::size_t c = 0; c < im.channels; ++c)
                    out.at(c, y, x) = im.at(c, iy, ix);
            } else {
                const long y0 = static_cast<long>(std::floor(sy));
                const long x0 = static_cast<long>(std::floor(sx));
                const double fy = sy - static_cast<double>(y0);
                const double fx = sx - static_cast<double>(x0);
                for (std::size_t c = 0; c < im.channels; ++c) {
                    auto sample = [&](long yy, long xx) -> double {
                        if (yy < 0 || xx < 0 || yy >= hh || xx >= ww) return 0.0;
                        return im.at(c, yy, xx);
                    };
                    const double top = sample(y0, x0) * (1.0 - fx) + sample(y0, x0 + 1) * fx;
                    const double bot = sample(y0 + 1, x0) * (1.0 - fx) + sample(y0 + 1, x0 + 1) * fx;
                    out.at(c, y, x) = static_cast<float>(top * (1.0 - fy) + bot * fy);
                }
            }
        }
    }
    return out;
}

AugmentResult augment(const FieldStack& stack, const AugmentSpec& spec) {
    AugmentResult result;
    const std::size_t h = stack.height(), w = stack.width();
    if (h < spec.target_size || w < spec.target_size) {
        result.skipped.push_back("field " + stack.id + " rejected: source " + std::to_string(h) +
                                 "x" + std::to_string(w) + " smaller than " +
                                 std::to_string(spec.target_size) + " in at least one extent");
        return result;
    }
    Rng rng(spec.seed);

    for (std::size_t size : spec.center_crop_sizes) {
        const std::string label = "center-" + std::to_string(size);
        if (size > h || size > w) {
            result.skipped.push_back(label + " skipped: crop exceeds source " + std::to_string(h) +
                                     "x" + std::to_string(w));
            continue;
        }
        FieldStack s =
            crop_and_fit(stack, (h - size) / 2, (w - size) / 2, size, spec.target_size);
        result.samples.push_back({std::move(s), label});
    }

    for (std::size_t i = 0; i < spec.n_random_crops; ++i) {
        const std::size_t y0 = rng.below(h - spec.random_crop_size + 1);
        const std::size_t x0 = rng.below(w - spec.random_crop_size + 1);
        FieldStack s = crop_and_fit(stack, y0, x0, spec.random_crop_size, spec.target_size);
        result.samples.push_back({std::move(s), "random-" + std::to_string(i)});
    }

    for (std::size_t i = 0; i < spec.n_rotations; ++i) {
        const double angle = rng.uniform(spec.rotation_min_deg, spec.rotation_max_deg);
        auto attr = [&](const Image& im) {
            Image r = rotate_image(im, angle, false);
            return (r.height == spec.target_size && r.width == spec.target_size)
                       ? r
                       : resize_bilinear(r, spec.target_size, spec.target_size);
        };
        auto msk = [&](const Image& im) {
            Image r = rotate_image(im, angle, true);
            if (r.height != spec.target_size || r.width != spec.target_size) {
                r = resize_bilinear(r, spec.target_size, spec.target_size);
                rebinarize(r);
            }
            return r;
        };
        FieldStack s = transform_stack(stack, attr, msk);
        char label[16];
        std::snprintf(label, sizeof(label), "rotate-%02zu", i);
        result.samples.push_back({std::move(s), label});
    }
    return result;
}

FieldStack to_model_input(const FieldStack& sample, std::size_t input_size) {
    auto cc = [&](const Image& im) { return center_crop(im, input_size); };
    FieldStack out = transform_stack(sample, cc, cc);
    return out;
}

}  // namespace terraseg
