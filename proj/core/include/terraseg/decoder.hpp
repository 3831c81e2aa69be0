#pragma once

#include <string>
#include <vector>

#include "terraseg/encoder.hpp"
#include "terraseg/errors.hpp"
#include "terraseg/ops.hpp"
#include "terraseg/params.hpp"
#include "terraseg/tensor.hpp"

namespace terraseg {

/// Fusion-head widths and the dilated-convolution geometry. The defaults
/// preserve spatial extent: (H + 2P - r(E-1) - 1)/S + 1 = H for r=2, E=3,
/// S=1, P=2.
struct DecoderConfig {
    std::size_t unified_channels = 768;  ///< C_h, per unified stage map
    std::size_t fused_channels = 256;    ///< C_m
    std::size_t dilation = 2;            ///< r
    std::size_t kernel = 3;              ///< E
    std::size_t stride = 1;              ///< S
    std::size_t pad = 2;                 ///< P

    void validate() const {
        if (unified_channels == 0 || fused_channels == 0)
            throw ConfigError("decoder: channel widths must be >= 1");
        if (kernel == 0 || stride == 0) throw ConfigError("decoder: E and S must be >= 1");
        // Spatial preservation: stride 1 and symmetric padding covering the
        // dilated kernel span exactly.
        if (stride != 1 || 2 * pad != dilation * (kernel - 1))
            throw ConfigError("decoder: conv geometry does not preserve spatial extent");
    }
};

/// Fuses the encoder's four feature maps into one-channel mask logits at a
/// quarter of the model input resolution: per-stage linear unification to
/// C_h channels, bilinear upsampling to the finest stage's extent,
/// concatenation, then two dilated convolutions (fuse to C_m, head to 1).
template <typename T>
struct Decoder {
    DecoderConfig cfg;
    std::vector<Linear<T>> unify;
    Tensor<T> fuse_w, fuse_b;
    Tensor<T> head_w, head_b;

    Decoder(ParamStore<T>& ps, const std::vector<std::size_t>& stage_channels,
            const DecoderConfig& config)
        : cfg(validated(config, stage_channels)),
          fuse_w(ps.weight("dec.fuse.w",
                           {cfg.fused_channels, stage_channels.size() * cfg.unified_channels,
                            cfg.kernel, cfg.kernel},
                           stage_channels.size() * cfg.unified_channels * cfg.kernel * cfg.kernel)),
          fuse_b(ps.zeros("dec.fuse.b", {cfg.fused_channels})),
          head_w(ps.weight("dec.head.w", {1, cfg.fused_channels, cfg.kernel, cfg.kernel},
                           cfg.fused_channels * cfg.kernel * cfg.kernel)),
          head_b(ps.zeros("dec.head.b", {1})) {
        unify.reserve(stage_channels.size());
        for (std::size_t i = 0; i < stage_channels.size(); ++i)
            unify.emplace_back(ps, "dec.unify" + std::to_string(i), stage_channels[i],
                               cfg.unified_channels);
    }

    static DecoderConfig validated(DecoderConfig c, const std::vector<std::size_t>& widths) {
        c.validate();
        if (widths.empty()) throw ConfigError("decoder: no stage widths given");
        return c;
    }

    /// Per-pixel linear map to C_h channels followed by bilinear upsampling
    /// to the target extent.
    Tensor<T> unify_and_upsample(const Tensor<T>& feature, std::size_t index, std::size_t target_h,
                                 std::size_t target_w) const {
        const std::size_t h = feature.dim(1), w = feature.dim(2);
        if (h > target_h || w > target_w)
            throw DimensionError("decoder: stage map " + shape_str(feature.shape()) +
                                 " exceeds target " + std::to_string(target_h) + "x" +
                                 std::to_string(target_w));
        const Tensor<T> unified = model_detail::to_spatial(
            unify[index].forward(model_detail::to_sequence(feature)), h, w);
        if (h == target_h && w == target_w) return unified;
        return ops::bilinear_resize(unified, target_h, target_w);
    }

    /// [1, H/4, W/4] mask logits.
    Tensor<T> forward(const std::vector<Tensor<T>>& features) const {
        if (features.size() != unify.size())
            throw DimensionError("decoder: expected " + std::to_string(unify.size()) +
                                 " feature maps, got " + std::to_string(features.size()));
        const std::size_t target_h = features.front().dim(1);
        const std::size_t target_w = features.front().dim(2);
        std::vector<Tensor<T>> unified;
        unified.reserve(features.size());
        for (std::size_t i = 0; i < features.size(); ++i)
            unified.push_back(unify_and_upsample(features[i], i, target_h, target_w));
        const Tensor<T> fused = ops::conv2d(ops::concat(unified, 0), fuse_w, fuse_b, cfg.stride,
                                            cfg.pad, cfg.dilation);
        return ops::conv2d(fused, head_w, head_b, cfg.stride, cfg.pad, cfg.dilation);
    }
};

}  // namespace terraseg
