#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "terraseg/errors.hpp"
#include "terraseg/ops.hpp"
#include "terraseg/params.hpp"
#include "terraseg/tensor.hpp"

namespace terraseg {

/// One hierarchy stage: patch-merge geometry plus the transformer block
/// hyper-parameters.
struct StageConfig {
    std::size_t patch = 3;     ///< merge kernel edge E
    std::size_t stride = 2;    ///< merge stride S
    std::size_t pad = 1;       ///< merge padding P
    std::size_t channels = 64;  ///< embedding width C
    std::size_t blocks = 1;    ///< block repeat count L
    std::size_t heads = 1;     ///< attention head count h
    std::size_t reduce = 1;    ///< key/value sequence-reduction factor R

    void validate() const {
        if (patch == 0 || stride == 0) throw ConfigError("stage: E and S must be >= 1");
        if (channels == 0 || blocks == 0) throw ConfigError("stage: C and L must be >= 1");
        if (heads == 0 || channels % heads != 0)
            throw ConfigError("stage: C = " + std::to_string(channels) +
                              " not divisible by h = " + std::to_string(heads));
        if (reduce == 0) throw ConfigError("stage: R must be >= 1");
    }
};

namespace model_detail {

/// [C,H,W] feature map -> [H*W, C] token sequence.
template <typename T>
Tensor<T> to_sequence(const Tensor<T>& spatial) {
    const std::size_t c = spatial.dim(0), n = spatial.dim(1) * spatial.dim(2);
    return ops::transpose(ops::reshape(spatial, {c, n}), {1, 0});
}

/// [N, C] token sequence -> [C,H,W] feature map.
template <typename T>
Tensor<T> to_spatial(const Tensor<T>& seq, std::size_t h, std::size_t w) {
    const std::size_t c = seq.dim(1);
    return ops::reshape(ops::transpose(seq, {1, 0}), {c, h, w});
}

}  // namespace model_detail

/// Shortens a token sequence by factor R for the attention key/value path:
/// rows are regrouped row-major (N,C) -> (N/R, R*C) — row i of the output
/// covers input rows [iR, (i+1)R) — then linearly projected back to width C.
template <typename T>
Tensor<T> sequence_reduce(const Tensor<T>& seq, std::size_t reduce, const Tensor<T>& w,
                          const Tensor<T>& b) {
    const std::size_t n = seq.dim(0), c = seq.dim(1);
    if (reduce == 0 || n % reduce != 0)
        throw ConfigError("sequence_reduce: factor " + std::to_string(reduce) +
                          " does not divide sequence length " + std::to_string(n));
    return ops::add_bias_rows(ops::matmul(ops::reshape(seq, {n / reduce, reduce * c}), w), b);
}

/// Per-token linear map with bias.
template <typename T>
struct Linear {
    Tensor<T> w, b;

    Linear(ParamStore<T>& ps, const std::string& prefix, std::size_t in, std::size_t out)
        : w(ps.weight(prefix + ".w", {in, out}, in)), b(ps.zeros(prefix + ".b", {out})) {}

    Tensor<T> forward(const Tensor<T>& x) const {
        return ops::add_bias_rows(ops::matmul(x, w), b);
    }
};

template <typename T>
struct LayerNorm {
    Tensor<T> gain, bias;

    LayerNorm(ParamStore<T>& ps, const std::string& prefix, std::size_t width)
        : gain(ps.ones(prefix + ".g", {width})), bias(ps.zeros(prefix + ".b", {width})) {}

    Tensor<T> forward(const Tensor<T>& x) const { return ops::layer_norm(x, gain, bias); }
};

/// Multi-head self-attention over a token sequence, with the key/value
/// sequence optionally shortened by factor R: tokens are regrouped row-major
/// (N,C) -> (N/R, R*C) and projected back to width C before the K/V maps.
template <typename T>
struct SelfAttention {
    std::size_t channels, heads, reduce;
    Linear<T> q, k, v, out;
    std::vector<Linear<T>> reducer;  // one element when R > 1

    SelfAttention(ParamStore<T>& ps, const std::string& prefix, std::size_t channels,
                  std::size_t heads, std::size_t reduce)
        : channels(channels),
          heads(heads),
          reduce(reduce),
          q(ps, prefix + ".q", channels, channels),
          k(ps, prefix + ".k", channels, channels),
          v(ps, prefix + ".v", channels, channels),
          out(ps, prefix + ".out", channels, channels) {
        if (reduce > 1) reducer.emplace_back(ps, prefix + ".reduce", reduce * channels, channels);
    }

    Tensor<T> forward(const Tensor<T>& seq) const {
        Tensor<T> kv_src = seq;
        if (reduce > 1)
            kv_src = sequence_reduce(seq, reduce, reducer.front().w, reducer.front().b);
        const Tensor<T> qs = q.forward(seq);
        const Tensor<T> ks = k.forward(kv_src);
        const Tensor<T> vs = v.forward(kv_src);

        const std::size_t head_dim = channels / heads;
        const T scale = static_cast<T>(std::sqrt(static_cast<double>(head_dim)));
        std::vector<Tensor<T>> head_outs;
        head_outs.reserve(heads);
        for (std::size_t e = 0; e < heads; ++e) {
            const Tensor<T> qe = ops::slice_cols(qs, e * head_dim, head_dim);
            const Tensor<T> ke = ops::slice_cols(ks, e * head_dim, head_dim);
            const Tensor<T> ve = ops::slice_cols(vs, e * head_dim, head_dim);
            const Tensor<T> scores = ops::matmul(qe, ops::transpose(ke, {1, 0}));
            const Tensor<T> weights = ops::softmax_rows(scores, scale);
            head_outs.push_back(ops::matmul(weights, ve));
        }
        const Tensor<T> merged = heads == 1 ? head_outs.front() : ops::concat(head_outs, 1);
        return out.forward(merged);
    }
};

/// Token-mixing feed-forward: expand 4x, depthwise 3x3 over the stage's
/// spatial arrangement, GELU, contract.
template <typename T>
struct MixFfn {
    static constexpr std::size_t kExpansion = 4;
    Linear<T> expand, contract;
    Tensor<T> dw_w, dw_b;

    MixFfn(ParamStore<T>& ps, const std::string& prefix, std::size_t channels)
        : expand(ps, prefix + ".expand", channels, kExpansion * channels),
          contract(ps, prefix + ".contract", kExpansion * channels, channels),
          dw_w(ps.weight(prefix + ".dw.w", {kExpansion * channels, 3, 3}, 9)),
          dw_b(ps.zeros(prefix + ".dw.b", {kExpansion * channels})) {}

    Tensor<T> forward(const Tensor<T>& seq, std::size_t h, std::size_t w) const {
        if (seq.dim(0) != h * w)
            throw DimensionError("mix-ffn: sequence length " + std::to_string(seq.dim(0)) +
                                 " does not match spatial " + std::to_string(h) + "x" +
                                 std::to_string(w));
        Tensor<T> wide = expand.forward(seq);
        Tensor<T> spatial = model_detail::to_spatial(wide, h, w);
        spatial = ops::gelu(ops::depthwise_conv2d(spatial, dw_w, dw_b, 1));
        return contract.forward(model_detail::to_sequence(spatial));
    }
};

/// Pre-norm residual pair: seq + Attn(LN(seq)), then + MixFFN(LN(.)).
template <typename T>
struct TransformerBlock {
    LayerNorm<T> ln1, ln2;
    SelfAttention<T> attn;
    MixFfn<T> ffn;

    TransformerBlock(ParamStore<T>& ps, const std::string& prefix, const StageConfig& cfg)
        : ln1(ps, prefix + ".ln1", cfg.channels),
          ln2(ps, prefix + ".ln2", cfg.channels),
          attn(ps, prefix + ".attn", cfg.channels, cfg.heads, cfg.reduce),
          ffn(ps, prefix + ".ffn", cfg.channels) {}

    Tensor<T> forward(const Tensor<T>& seq, std::size_t h, std::size_t w) const {
        const Tensor<T> attended = ops::add(seq, attn.forward(ln1.forward(seq)));
        return ops::add(attended, ffn.forward(ln2.forward(attended), h, w));
    }
};

/// One encoder stage: overlapped patch merge (strided convolution), L
/// transformer blocks over the flattened token sequence, and a closing
/// normalization before the feature map is handed on.
template <typename T>
struct EncoderStage {
    StageConfig cfg;
    Tensor<T> merge_w, merge_b;
    std::vector<TransformerBlock<T>> blocks;
    LayerNorm<T> norm;

    EncoderStage(ParamStore<T>& ps, const std::string& prefix, std::size_t in_channels,
                 const StageConfig& config)
        : cfg(validated(config)),
          merge_w(ps.weight(prefix + ".merge.w",
                            {cfg.channels, in_channels, cfg.patch, cfg.patch},
                            in_channels * cfg.patch * cfg.patch)),
          merge_b(ps.zeros(prefix + ".merge.b", {cfg.channels})),
          norm(ps, prefix + ".ln", cfg.channels) {
        blocks.reserve(cfg.blocks);
        for (std::size_t j = 0; j < cfg.blocks; ++j)
            blocks.emplace_back(ps, prefix + ".b" + std::to_string(j), cfg);
    }

    static StageConfig validated(StageConfig c) {
        c.validate();
        return c;
    }

    /// Output spatial extent of the merge for a given input extent.
    std::size_t merged_extent(std::size_t in) const {
        const std::size_t padded = in + 2 * cfg.pad;
        if (padded < cfg.patch)
            throw ConfigError("stage: input extent " + std::to_string(in) +
                              " too small for patch " + std::to_string(cfg.patch));
        return (padded - cfg.patch) / cfg.stride + 1;
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        const std::size_t h = merged_extent(x.dim(1));
        const std::size_t w = merged_extent(x.dim(2));
        if (h == 0 || w == 0)
            throw ConfigError("stage: degenerate merged extent for input " +
                              shape_str(x.shape()));
        const Tensor<T> merged = ops::conv2d(x, merge_w, merge_b, cfg.stride, cfg.pad);
        Tensor<T> seq = model_detail::to_sequence(merged);
        for (const TransformerBlock<T>& block : blocks) seq = block.forward(seq, h, w);
        return model_detail::to_spatial(norm.forward(seq), h, w);
    }
};

/// Four-stage hierarchical encoder over a multi-attribute raster stack.
template <typename T>
struct Encoder {
    std::size_t in_channels;
    std::vector<EncoderStage<T>> stages;

    Encoder(ParamStore<T>& ps, std::size_t in_channels, const std::vector<StageConfig>& cfgs)
        : in_channels(in_channels) {
        if (cfgs.empty()) throw ConfigError("encoder: needs at least one stage");
        for (const StageConfig& cfg : cfgs) cfg.validate();
        stages.reserve(cfgs.size());
        std::size_t prev = in_channels;
        for (std::size_t i = 0; i < cfgs.size(); ++i) {
            stages.emplace_back(ps, "enc.s" + std::to_string(i), prev, cfgs[i]);
            prev = cfgs[i].channels;
        }
    }

    /// Combined downsampling factor of all merge strides.
    std::size_t downsample() const {
        std::size_t d = 1;
        for (const EncoderStage<T>& s : stages) d *= s.cfg.stride;
        return d;
    }

    /// Feature maps of every stage, coarsest last.
    std::vector<Tensor<T>> forward(const Tensor<T>& x) const {
        if (x.rank() != 3 || x.dim(0) != in_channels)
            throw UsageError(
                "encoder: expected " + std::to_string(in_channels) +
                " input channels (aspect, flow accumulation, slope, NDVI, yield stacked as RGB "
                "triples), got " +
                shape_str(x.shape()));
        const std::size_t d = downsample();
        if (x.dim(1) % d != 0 || x.dim(2) % d != 0)
            throw UsageError("encoder: input extents " + std::to_string(x.dim(1)) + "x" +
                             std::to_string(x.dim(2)) + " must be divisible by " +
                             std::to_string(d));
        std::vector<Tensor<T>> features;
        features.reserve(stages.size());
        Tensor<T> cur = x;
        for (const EncoderStage<T>& stage : stages) {
            cur = stage.forward(cur);
            features.push_back(cur);
        }
        return features;
    }
};

}  // namespace terraseg
