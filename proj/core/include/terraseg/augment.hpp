#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "terraseg/field.hpp"
#include "terraseg/image.hpp"

namespace terraseg {

/// Constants of the augmentation pipeline: a fixed centre-crop series, ten
/// seeded random crops, twenty seeded rotations, everything resized to one
/// square target edge.
struct AugmentSpec {
    std::vector<std::size_t> center_crop_sizes{900, 700, 572, 300};
    std::size_t n_random_crops = 10;
    std::size_t random_crop_size = 572;
    std::size_t n_rotations = 20;
    double rotation_min_deg = 5.0;
    double rotation_max_deg = 60.0;
    std::size_t target_size = 572;
    std::size_t model_input_size = 512;
    std::uint64_t seed = 0;
};

struct AugmentedSample {
    FieldStack stack;   // target_size x target_size
    std::string label;  // e.g. "center-900", "random-3", "rotate-07"
};

struct AugmentResult {
    std::vector<AugmentedSample> samples;
    std::vector<std::string> skipped;  // human-readable reasons for skipped items
};

// ---- image geometry -----------------------------------------------------------

/// Copies the window starting at (y0, x0).
Image crop(const Image& im, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w);

/// Square crop centred on the image (offsets rounded down).
Image center_crop(const Image& im, std::size_t size);

/// Bilinear resample with half-pixel centre alignment.
Image resize_bilinear(const Image& im, std::size_t h, std::size_t w);

/// Rotates image content counter-clockwise about the image centre, keeping
/// the canvas size; samples falling outside the source read as zero.
/// `nearest` selects nearest-neighbour sampling (for masks) instead of
/// bilinear.
Image rotate_image(const Image& im, double degrees, bool nearest);

// ---- pipeline -------------------------------------------------------------------

/// Expands one field into its augmented sample set: the centre-crop series
/// (each resized to the target edge), seeded random crops, and seeded
/// rotations of the whole field. Attribute rasters are interpolated
/// bilinearly, masks use nearest-neighbour rotation and are re-binarised at
/// 0.5 after any interpolation. Deterministic for a fixed spec seed. Fields
/// smaller than the target in either extent are rejected with a reason.
AugmentResult augment(const FieldStack& stack, const AugmentSpec& spec);

/// Bridges the augmented sample edge to the model input edge by centre
/// cropping every raster (572 -> 512 uses offset 30).
FieldStack to_model_input(const FieldStack& sample, std::size_t input_size = 512);

}  // namespace terraseg
