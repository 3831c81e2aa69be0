#pragma once

// The four-cell comparison experiment: {grayscale, RGB-stacked} inputs x
// {BCE, focal} losses, trained with identical seeds and data so the only
// varying factors are the cell's own. Each cell trains a Unet-style model,
// scores every checkpoint, and contributes one row to a grid manifest.

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "terraseg/metrics.hpp"
#include "terraseg/train.hpp"
#include "terraseg/unet.hpp"

namespace terraseg {

enum class InputMode { kGrayscale, kRgb };

inline const char* input_mode_name(InputMode mode) {
    return mode == InputMode::kGrayscale ? "grayscale" : "rgb";
}

/// Grayscale keeps one plane per attribute; RGB keeps each attribute's three
/// stacked planes.
inline std::size_t input_mode_channels(InputMode mode) {
    return mode == InputMode::kGrayscale ? 5 : 15;
}

struct GridCell {
    std::string name;
    InputMode mode = InputMode::kRgb;
    LossKind loss = LossKind::kBce;
};

/// The four cells in a fixed, reproducible order.
inline std::vector<GridCell> experiment_grid_cells() {
    return {
        {"gray-bce", InputMode::kGrayscale, LossKind::kBce},
        {"gray-focal", InputMode::kGrayscale, LossKind::kFocal},
        {"rgb-bce", InputMode::kRgb, LossKind::kBce},
        {"rgb-focal", InputMode::kRgb, LossKind::kFocal},
    };
}

struct GridSpec {
    TrainConfig train;  // shared verbatim by all four cells, seed included
    UnetConfig unet;    // width/batch template; input channels set per cell
    // The focal cells weight the positive class at 0.75: sampling sites are
    // the rare class, and this keeps their share of the first gradient step
    // above what plain BCE gives them, which is the point of running focal
    // loss against imbalance. (0.25 would weight the dominant background.)
    double focal_alpha = 0.75;
    double focal_gamma = 2.0;
    double threshold = kDefaultThreshold;
};

/// Comparison-arm training defaults: larger batches, sparse checkpoints.
inline TrainConfig grid_train_defaults() {
    TrainConfig cfg;
    cfg.batch_size = 32;
    cfg.checkpoint_every = 500;
    return cfg;
}

struct GridCellResult {
    GridCell cell;
    std::filesystem::path checkpoint;   // best by validation MIoU
    std::filesystem::path metrics_csv;  // per-checkpoint MA/MDC/MIoU curve
    std::string error;                  // non-empty when the cell failed

    bool ok() const { return error.empty(); }
};

/// Both input renderings of the same underlying fields. Pair i of the gray
/// vectors must correspond to pair i of the rgb vectors.
struct GridData {
    std::vector<Sample> rgb_train;
    std::vector<Sample> rgb_val;
    std::vector<Sample> gray_train;
    std::vector<Sample> gray_val;
};

/// Trains all four cells into out_dir/<cell>/ and writes the grid manifest
/// `cell,input_mode,loss,checkpoint_path` to out_dir/grid.csv. A failure in
/// one cell is recorded in its result and does not stop the others.
std::vector<GridCellResult> run_grid(const GridData& data, const GridSpec& spec,
                                     const std::filesystem::path& out_dir);

/// How the first gradient step distributes its mass between foreground and
/// background pixels of the logit map.
struct GradientShare {
    double foreground = 0.0;
    double background = 0.0;

    double share() const {
        const double total = foreground + background;
        return total > 0.0 ? foreground / total : 0.0;
    }
};

template <class Model>
GradientShare foreground_gradient_share(Model& model, const std::vector<Sample>& batch,
                                        LossKind kind, double focal_alpha = 0.25,
                                        double focal_gamma = 2.0) {
    if (batch.empty()) throw UsageError("foreground_gradient_share: empty batch");
    model.params.zero_grads();

    std::vector<Tensor<float>> logit_maps;
    logit_maps.reserve(batch.size());
    Tensor<float> summed;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        Tensor<float> logits = model.forward_logits(batch[i].input);
        Tensor<float> loss =
            kind == LossKind::kFocal
                ? ops::focal_with_logits_mean(logits, batch[i].target,
                                              static_cast<float>(focal_alpha),
                                              static_cast<float>(focal_gamma))
                : ops::bce_with_logits_mean(logits, batch[i].target);
        summed = i == 0 ? loss : ops::add(summed, loss);
        logit_maps.push_back(logits);
    }
    backward(ops::scale(summed, 1.0f / static_cast<float>(batch.size())));

    GradientShare out;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& g = logit_maps[i].grad();
        const auto& y = batch[i].target.values();
        for (std::size_t px = 0; px < g.size(); ++px) {
            const double mass = std::abs(static_cast<double>(g[px]));
            (y[px] > 0.5f ? out.foreground : out.background) += mass;
        }
    }
    return out;
}

}  // namespace terraseg
