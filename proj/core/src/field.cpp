#include "terraseg/field.hpp"

#include <array>

#include "terraseg/errors.hpp"

namespace terraseg {

namespace {

constexpr std::array<const char*, 6> kFileNames = {"aspect.png", "flow.png",  "slope.png",
                                                   "ndvi.png",   "yield.png", "mask.png"};

Image load_raster(const std::filesystem::path& file, bool is_mask) {
    if (!std::filesystem::exists(file))
        throw IoError("field ingestion: missing raster " + file.string());
    PngMeta meta;
    Image im = read_png(file, &meta);
    if (meta.bit_depth != 8)
        throw FormatError("field ingestion: " + file.string() + " has bit depth " +
                          std::to_string(meta.bit_depth) + ", expected 8");
    if (is_mask) {
        Image gray = to_grayscale(im);
        // Binarise at sample value 128 (gray >= 128/255 counts as foreground).
        for (float& v : gray.data) v = v >= 128.0f / 255.0f ? 1.0f : 0.0f;
        return gray;
    }
    return to_rgb(im);
}

}  // namespace

const Image& FieldStack::attribute(std::size_t i) const {
    switch (i) {
        case 0: return aspect;
        case 1: return flow;
        case 2: return slope;
        case 3: return ndvi;
        case 4: return yield_;
        default: throw UsageError("FieldStack: attribute index out of range");
    }
}

Image& FieldStack::attribute(std::size_t i) {
    return const_cast<Image&>(static_cast<const FieldStack&>(*this).attribute(i));
}

const char* FieldStack::attribute_name(std::size_t i) {
    constexpr std::array<const char*, 5> names = {"aspect", "flow", "slope", "ndvi", "yield"};
    if (i >= names.size()) throw UsageError("FieldStack: attribute index out of range");
    return names[i];
}

FieldStack load_field(const std::filesystem::path& directory) {
    FieldStack stack;
    stack.id = directory.filename().string();
    stack.aspect = load_raster(directory / kFileNames[0], false);
    stack.flow = load_raster(directory / kFileNames[1], false);
    stack.slope = load_raster(directory / kFileNames[2], false);
    stack.ndvi = load_raster(directory / kFileNames[3], false);
    stack.yield_ = load_raster(directory / kFileNames[4], false);
    stack.mask = load_raster(directory / kFileNames[5], true);

    const std::size_t h = stack.mask.height, w = stack.mask.width;
    for (std::size_t i = 0; i < FieldStack::kAttributeCount; ++i) {
        const Image& im = stack.attribute(i);
        if (im.height != h || im.width != w) {
            throw FormatError("field ingestion: " + (directory / kFileNames[i]).string() +
                              " is " + std::to_string(im.height) + "x" + std::to_string(im.width) +
                              " but mask.png is " + std::to_string(h) + "x" + std::to_string(w));
        }
    }
    return stack;
}

void save_field(const std::filesystem::path& directory, const FieldStack& stack) {
    std::filesystem::create_directories(directory);
    for (std::size_t i = 0; i < FieldStack::kAttributeCount; ++i)
        write_png(directory / kFileNames[i], to_rgb(stack.attribute(i)));
    write_png(directory / kFileNames[5], stack.mask);
}

Tensor<float> stack_to_input(const FieldStack& stack) {
    const std::size_t h = stack.height(), w = stack.width();
    std::vector<float> data;
    data.reserve(15 * h * w);
    for (std::size_t i = 0; i < FieldStack::kAttributeCount; ++i) {
        const Image& im = stack.attribute(i);
        data.insert(data.end(), im.data.begin(), im.data.end());
    }
    return Tensor<float>::from_data({15, h, w}, std::move(data));
}

Tensor<float> stack_to_grayscale_input(const FieldStack& stack) {
    const std::size_t h = stack.height(), w = stack.width();
    std::vector<float> data;
    data.reserve(5 * h * w);
    for (std::size_t i = 0; i < FieldStack::kAttributeCount; ++i) {
        Image gray = to_grayscale(stack.attribute(i));
        data.insert(data.end(), gray.data.begin(), gray.data.end());
    }
    return Tensor<float>::from_data({5, h, w}, std::move(data));
}

Tensor<float> mask_to_target(const FieldStack& stack) {
    std::vector<float> data(stack.mask.data);
    return Tensor<float>::from_data({1, stack.height(), stack.width()}, std::move(data));
}

}  // namespace terraseg
