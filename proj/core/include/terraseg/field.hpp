#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "terraseg/image.hpp"
#include "terraseg/tensor.hpp"

namespace terraseg {

/// Aligned per-field raster set: five three-channel attribute images plus a
/// binary mask. Channel stacking order is fixed as (aspect, flow
/// accumulation, slope, NDVI, yield) -> 15 input channels.
struct FieldStack {
    std::string id;
    Image aspect;   // 3 channels
    Image flow;     // 3 channels
    Image slope;    // 3 channels
    Image ndvi;     // 3 channels
    Image yield_;   // 3 channels
    Image mask;     // 1 channel, values {0, 1}

    std::size_t height() const { return mask.height; }
    std::size_t width() const { return mask.width; }

    const Image& attribute(std::size_t i) const;
    Image& attribute(std::size_t i);
    static constexpr std::size_t kAttributeCount = 5;
    static const char* attribute_name(std::size_t i);
};

/// Loads aspect.png, flow.png, slope.png, ndvi.png, yield.png, mask.png from
/// one field directory. Attributes are promoted to three channels, the mask
/// is binarised at sample value 128. Missing files, extent mismatches and
/// non-8-bit sources raise an error naming the offending file.
FieldStack load_field(const std::filesystem::path& directory);

/// Writes the six rasters of a stack into `directory` using the same layout
/// load_field expects (attributes RGB, mask single-channel {0,255}).
void save_field(const std::filesystem::path& directory, const FieldStack& stack);

/// Stacks the five attributes into a 15xHxW input tensor (attribute-major:
/// aspect RGB, flow RGB, slope RGB, NDVI RGB, yield RGB).
Tensor<float> stack_to_input(const FieldStack& stack);

/// Reduces each attribute to one luminance channel: a 5xHxW input tensor for
/// the grayscale experiment arm.
Tensor<float> stack_to_grayscale_input(const FieldStack& stack);

/// The mask as a 1xHxW float tensor of {0, 1}.
Tensor<float> mask_to_target(const FieldStack& stack);

}  // namespace terraseg
