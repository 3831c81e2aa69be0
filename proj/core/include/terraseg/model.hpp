#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "terraseg/decoder.hpp"
#include "terraseg/encoder.hpp"
#include "terraseg/errors.hpp"
#include "terraseg/ops.hpp"
#include "terraseg/params.hpp"

namespace terraseg {

/// Complete segmentation-model description: input layout, the four encoder
/// stages, and the decoder widths.
struct ModelConfig {
    std::string name = "paper";
    std::size_t in_channels = 15;
    std::size_t input_size = 512;  ///< nominal square input edge
    std::vector<StageConfig> stages;
    DecoderConfig decoder;

    void validate() const {
        if (in_channels == 0) throw ConfigError("model: in_channels must be >= 1");
        if (stages.empty()) throw ConfigError("model: no encoder stages");
        for (const StageConfig& s : stages) s.validate();
        decoder.validate();
    }
};

/// Full-width configuration: 512x512x15 input, stage widths
/// (64,128,320,512) with depths (3,3,18,3), decoder 768/256.
inline ModelConfig paper_model_config() {
    ModelConfig cfg;
    cfg.name = "paper";
    cfg.in_channels = 15;
    cfg.input_size = 512;
    cfg.stages = {
        StageConfig{7, 4, 3, 64, 3, 1, 64},
        StageConfig{3, 2, 1, 128, 3, 2, 16},
        StageConfig{3, 2, 1, 320, 18, 5, 4},
        StageConfig{3, 2, 1, 512, 3, 8, 1},
    };
    cfg.decoder = DecoderConfig{};  // 768 / 256, dilated 3x3
    return cfg;
}

/// Desk-scale configuration for 128x128 inputs: same topology with stage
/// widths (16,32,64,128), depths (1,1,2,1) and a slimmer decoder.
inline ModelConfig tiny_model_config() {
    ModelConfig cfg;
    cfg.name = "tiny";
    cfg.in_channels = 15;
    cfg.input_size = 128;
    cfg.stages = {
        StageConfig{7, 4, 3, 16, 1, 1, 64},
        StageConfig{3, 2, 1, 32, 1, 2, 16},
        StageConfig{3, 2, 1, 64, 2, 4, 4},
        StageConfig{3, 2, 1, 128, 1, 8, 1},
    };
    cfg.decoder.unified_channels = 128;
    cfg.decoder.fused_channels = 64;
    return cfg;
}

inline ModelConfig model_config_by_name(const std::string& name) {
    if (name == "paper") return paper_model_config();
    if (name == "tiny") return tiny_model_config();
    throw ConfigError("unknown model preset '" + name + "' (expected paper or tiny)");
}

/// Encoder + decoder with a shared parameter store. Forward output is a
/// full-resolution probability map; training consumes the pre-activation
/// logits instead.
template <typename T>
struct SegModel {
    ModelConfig cfg;
    ParamStore<T> params;
    Encoder<T> encoder;
    Decoder<T> decoder;

    SegModel(const ModelConfig& config, std::uint64_t seed)
        : cfg((config.validate(), config)),
          params(seed),
          encoder(params, config.in_channels, config.stages),
          decoder(params, stage_widths(config), config.decoder) {}

    static std::vector<std::size_t> stage_widths(const ModelConfig& config) {
        std::vector<std::size_t> widths;
        widths.reserve(config.stages.size());
        for (const StageConfig& s : config.stages) widths.push_back(s.channels);
        return widths;
    }

    /// Mask logits at the input resolution: encoder stages, decoder fusion
    /// at quarter resolution, bilinear upsampling of the logits.
    Tensor<T> forward_logits(const Tensor<T>& x) const {
        const Tensor<T> quarter = decoder.forward(encoder.forward(x));
        if (quarter.dim(1) == x.dim(1) && quarter.dim(2) == x.dim(2)) return quarter;
        return ops::bilinear_resize(quarter, x.dim(1), x.dim(2));
    }

    /// Full-resolution probability map in (0,1).
    Tensor<T> forward(const Tensor<T>& x) const { return ops::sigmoid(forward_logits(x)); }
};

using SegModelF = SegModel<float>;
using SegModelD = SegModel<double>;

}  // namespace terraseg
