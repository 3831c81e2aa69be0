#pragma once

// The fit loop: seeded per-epoch shuffling, mini-batch gradient descent on a
// logits-space loss, per-epoch validation with frozen parameters, loss-curve
// CSV output, periodic checkpoints, and exact resume. Works for any model
// exposing `params` (a ParamStore<float>) and `forward_logits` /
// `forward(Tensor<float>)`.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "terraseg/checkpoint.hpp"
#include "terraseg/errors.hpp"
#include "terraseg/metrics.hpp"
#include "terraseg/ops.hpp"
#include "terraseg/optim.hpp"
#include "terraseg/rng.hpp"
#include "terraseg/tensor.hpp"

namespace terraseg {

/// One training or evaluation example: the stacked attribute raster and its
/// full-resolution binary target.
struct Sample {
    std::string id;
    Tensor<float> input;   // {C, H, W}
    Tensor<float> target;  // {1, H, W}, values in {0, 1}
};

enum class LossKind { kBce, kFocal };

inline LossKind parse_loss_kind(const std::string& s) {
    if (s == "bce") return LossKind::kBce;
    if (s == "focal") return LossKind::kFocal;
    throw ConfigError("unknown loss '" + s + "' (expected bce or focal)");
}

inline const char* loss_kind_name(LossKind kind) {
    return kind == LossKind::kBce ? "bce" : "focal";
}

struct FitSpec {
    TrainConfig train;
    LossKind loss = LossKind::kBce;
    double focal_alpha = 0.25;
    double focal_gamma = 2.0;
    std::filesystem::path out_dir;      // empty: keep everything in memory
    std::filesystem::path resume_from;  // empty: fresh start
    std::string checkpoint_stem = "checkpoint";
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct CheckpointRecord {
    std::size_t epoch = 0;
    std::filesystem::path path;
};

struct TrainResult {
    std::vector<EpochRecord> curve;           // epochs run by this call
    std::vector<CheckpointRecord> checkpoints;
    std::size_t start_epoch = 0;              // epoch count already done at entry
};

namespace train_detail {

template <class Model>
Tensor<float> sample_loss(Model& model, const Sample& sample, const FitSpec& spec) {
    const Tensor<float> logits = model.forward_logits(sample.input);
    if (spec.loss == LossKind::kFocal)
        return ops::focal_with_logits_mean(logits, sample.target,
                                           static_cast<float>(spec.focal_alpha),
                                           static_cast<float>(spec.focal_gamma));
    return ops::bce_with_logits_mean(logits, sample.target);
}

inline void append_curve_row(const std::filesystem::path& path, const EpochRecord& row,
                             bool fresh_file) {
    std::ofstream csv(path, fresh_file ? std::ios::trunc : std::ios::app);
    if (!csv) throw IoError("cannot write loss curve " + path.string());
    if (fresh_file) csv << "epoch,train_loss,val_loss\n";
    char line[128];
    std::snprintf(line, sizeof line, "%zu,%.9g,%.9g\n", row.epoch, row.train_loss,
                  row.val_loss);
    csv << line;
    if (!csv) throw IoError("failed writing loss curve " + path.string());
}

inline std::filesystem::path checkpoint_path(const FitSpec& spec, std::size_t epoch) {
    char name[64];
    std::snprintf(name, sizeof name, "%s-%05zu.sseg", spec.checkpoint_stem.c_str(), epoch);
    return spec.out_dir / name;
}

}  // namespace train_detail

/// Mean per-sample loss with frozen parameters.
template <class Model>
double mean_loss(Model& model, const std::vector<Sample>& samples, const FitSpec& spec) {
    if (samples.empty()) return std::numeric_limits<double>::quiet_NaN();
    NoGradGuard freeze;
    double total = 0.0;
    for (const Sample& sample : samples)
        total += static_cast<double>(train_detail::sample_loss(model, sample, spec).item());
    return total / static_cast<double>(samples.size());
}

/// Thresholded segmentation quality over a sample list, one confusion matrix
/// per sample.
template <class Model>
SegmentationMetrics evaluate_model(Model& model, const std::vector<Sample>& samples,
                                   double threshold = kDefaultThreshold) {
    if (samples.empty()) throw UsageError("evaluate_model: no samples");
    NoGradGuard freeze;
    std::vector<ConfusionCounts> per_sample;
    per_sample.reserve(samples.size());
    for (const Sample& sample : samples) {
        const Tensor<float> probs = model.forward(sample.input);
        std::vector<float> pred(probs.numel());
        const auto& pv = probs.values();
        for (std::size_t i = 0; i < pv.size(); ++i)
            pred[i] = threshold_probability(static_cast<double>(pv[i]), threshold) ? 1.0f : 0.0f;
        per_sample.push_back(confusion(pred, sample.target.values()));
    }
    return segmentation_metrics(per_sample);
}

/// Runs (or resumes) gradient descent over `train_set`. Artifacts land in
/// spec.out_dir when set: a checkpoint every train.checkpoint_every epochs
/// (plus the final epoch) and one loss-curve row per epoch.
template <class Model>
TrainResult fit(Model& model, const std::vector<Sample>& train_set,
                const std::vector<Sample>& val_set, const FitSpec& spec) {
    spec.train.validate();
    if (train_set.empty()) throw UsageError("fit: training set is empty");
    const TrainConfig& cfg = spec.train;

    SgdMomentum<float> optimizer(model.params, cfg);
    TrainResult result;
    if (!spec.resume_from.empty()) {
        TrainingSnapshot snapshot =
            load_training_checkpoint(spec.resume_from.string(), model.params);
        if (snapshot.has_optimizer)
            optimizer.restore(snapshot.step_count, std::move(snapshot.momentum));
        result.start_epoch = snapshot.epoch;
    }

    const bool writes = !spec.out_dir.empty();
    if (writes) std::filesystem::create_directories(spec.out_dir);
    const std::filesystem::path curve_path = spec.out_dir / "losses.csv";

    const std::size_t total = train_set.size();
    const std::size_t iterations = iterations_per_epoch(total, cfg.batch_size);
    std::vector<std::size_t> order(total);

    for (std::size_t epoch = result.start_epoch + 1; epoch <= cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle_rng(derive_seed(cfg.seed, epoch));
        shuffle_rng.shuffle(order);

        double epoch_loss_sum = 0.0;
        for (std::size_t it = 0; it < iterations; ++it) {
            const std::size_t begin = it * cfg.batch_size;
            const std::size_t end = std::min(begin + cfg.batch_size, total);
            const std::size_t batch = end - begin;

            model.params.zero_grads();
            Tensor<float> summed;
            for (std::size_t b = begin; b < end; ++b) {
                Tensor<float> loss = train_detail::sample_loss(model, train_set[order[b]], spec);
                summed = (b == begin) ? loss : ops::add(summed, loss);
            }
            const Tensor<float> batch_loss =
                ops::scale(summed, 1.0f / static_cast<float>(batch));
            const double loss_value = static_cast<double>(batch_loss.item());
            if (!std::isfinite(loss_value))
                throw DomainError("training aborted: non-finite loss at epoch " +
                                  std::to_string(epoch) + ", iteration " +
                                  std::to_string(it + 1));
            backward(batch_loss);
            optimizer.step();
            epoch_loss_sum += loss_value * static_cast<double>(batch);
        }

        EpochRecord record;
        record.epoch = epoch;
        record.train_loss = epoch_loss_sum / static_cast<double>(total);
        record.val_loss = mean_loss(model, val_set, spec);
        result.curve.push_back(record);

        if (writes) {
            // The first epoch of a fresh run starts the curve file over;
            // resumed runs append below the rows already present.
            train_detail::append_curve_row(curve_path, record, epoch == 1);
            if (epoch % cfg.checkpoint_every == 0 || epoch == cfg.epochs) {
                const auto path = train_detail::checkpoint_path(spec, epoch);
                save_training_checkpoint(path.string(), model.params, &optimizer, epoch);
                result.checkpoints.push_back({epoch, path});
            }
        }
    }
    return result;
}

/// Validation score attached to one saved checkpoint.
struct ScoredCheckpoint {
    std::filesystem::path path;
    std::size_t epoch = 0;
    double val_miou = 0.0;
};

/// The checkpoint with the highest validation MIoU; ties go to the earliest
/// epoch.
inline const ScoredCheckpoint& select_best(const std::vector<ScoredCheckpoint>& scored) {
    if (scored.empty()) throw UsageError("select_best: no evaluated checkpoints");
    const ScoredCheckpoint* best = &scored.front();
    for (const ScoredCheckpoint& c : scored) {
        if (c.val_miou > best->val_miou ||
            (c.val_miou == best->val_miou && c.epoch < best->epoch))
            best = &c;
    }
    return *best;
}

}  // namespace terraseg
