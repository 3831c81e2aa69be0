#pragma once

// Unet-style comparison model: conv-conv encoder blocks with 2x max-pool
// between levels, a bottleneck, and a mirrored decoder that bilinearly
// upsamples and concatenates the same-resolution encoder feature before each
// conv block. A 1x1 head emits single-channel logits at full resolution.

#include <cstddef>
#include <string>
#include <vector>

#include "terraseg/errors.hpp"
#include "terraseg/ops.hpp"
#include "terraseg/params.hpp"
#include "terraseg/tensor.hpp"

namespace terraseg {

struct UnetConfig {
    std::vector<std::size_t> widths = {16, 32, 64, 128};  // per level, last = bottleneck
    std::size_t in_channels = 15;  // 15 for stacked attribute triples, 5 for grayscale
    std::size_t batch_size = 32;

    std::size_t depth() const { return widths.size(); }
    std::size_t downsample() const { return std::size_t{1} << depth(); }

    void validate() const {
        if (widths.size() < 2)
            throw ConfigError("unet needs at least one encoder level plus a bottleneck");
        for (std::size_t w : widths)
            if (w == 0) throw ConfigError("unet channel widths must be positive");
        if (in_channels == 0) throw ConfigError("unet input channel count must be positive");
        if (batch_size == 0) throw ConfigError("unet batch size must be positive");
    }
};

template <class T>
class UnetModel {
public:
    ParamStore<T> params;

    UnetModel(const UnetConfig& config, std::uint64_t seed)
        : params(seed), cfg_(validated(config)) {
        const std::size_t levels = cfg_.widths.size();
        std::size_t in = cfg_.in_channels;
        for (std::size_t i = 0; i + 1 < levels; ++i) {
            make_block("unet.enc" + std::to_string(i), in, cfg_.widths[i]);
            in = cfg_.widths[i];
        }
        make_block("unet.bott", in, cfg_.widths.back());
        for (std::size_t i = levels - 1; i-- > 0;) {
            // Input: the upsampled deeper feature concatenated with the skip.
            const std::size_t deeper = i + 1 < levels - 1 ? cfg_.widths[i + 1] : cfg_.widths.back();
            make_block("unet.dec" + std::to_string(i), deeper + cfg_.widths[i], cfg_.widths[i]);
        }
        params.weight("unet.head.w", {1, cfg_.widths.front(), 1, 1}, cfg_.widths.front());
        params.zeros("unet.head.b", {1});
    }

    const UnetConfig& config() const { return cfg_; }

    Tensor<T> forward_logits(const Tensor<T>& x) const {
        if (x.rank() != 3) throw DimensionError("unet: expected input[C,H,W]");
        if (x.dim(0) != cfg_.in_channels)
            throw UsageError("unet: expected " + std::to_string(cfg_.in_channels) +
                             " input channels, got " + std::to_string(x.dim(0)));
        const std::size_t div = cfg_.downsample();
        if (x.dim(1) % div != 0 || x.dim(2) % div != 0)
            throw ConfigError("unet: input extents " + std::to_string(x.dim(1)) + "x" +
                              std::to_string(x.dim(2)) + " must be divisible by " +
                              std::to_string(div));

        const std::size_t levels = cfg_.widths.size();
        std::vector<Tensor<T>> skips;
        Tensor<T> cur = x;
        for (std::size_t i = 0; i + 1 < levels; ++i) {
            cur = block(cur, "unet.enc" + std::to_string(i));
            skips.push_back(cur);
            cur = ops::maxpool2d(cur);
        }
        cur = block(cur, "unet.bott");
        for (std::size_t i = levels - 1; i-- > 0;) {
            const Tensor<T>& skip = skips[i];
            cur = ops::bilinear_resize(cur, skip.dim(1), skip.dim(2));
            cur = block(ops::concat(std::vector<Tensor<T>>{cur, skip}, 0),
                        "unet.dec" + std::to_string(i));
        }
        return ops::conv2d(cur, params.at("unet.head.w"), params.at("unet.head.b"));
    }

    Tensor<T> forward(const Tensor<T>& x) const { return ops::sigmoid(forward_logits(x)); }

private:
    static UnetConfig validated(UnetConfig c) {
        c.validate();
        return c;
    }

    void make_block(const std::string& name, std::size_t in, std::size_t out) {
        params.weight(name + ".c1.w", {out, in, 3, 3}, in * 9);
        params.zeros(name + ".c1.b", {out});
        params.weight(name + ".c2.w", {out, out, 3, 3}, out * 9);
        params.zeros(name + ".c2.b", {out});
    }

    Tensor<T> block(const Tensor<T>& x, const std::string& name) const {
        auto h = ops::relu(
            ops::conv2d(x, params.at(name + ".c1.w"), params.at(name + ".c1.b"), 1, 1));
        return ops::relu(
            ops::conv2d(h, params.at(name + ".c2.w"), params.at(name + ".c2.b"), 1, 1));
    }

    UnetConfig cfg_;
};

using UnetModelF = UnetModel<float>;
using UnetModelD = UnetModel<double>;

}  // namespace terraseg
