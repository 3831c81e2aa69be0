#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "terraseg/errors.hpp"
#include "terraseg/image.hpp"

namespace terraseg {

/// Default probability cutoff expressed in the 8-bit sample domain.
inline constexpr double kDefaultThreshold = 190.0;

/// Binarises one probability in [0,1]: the value is scaled to the 8-bit
/// sample domain in double precision and compared against the cutoff.
/// Samples strictly below the cutoff map to background.
inline bool threshold_probability(double p, double threshold = kDefaultThreshold) {
    if (!(p >= 0.0 && p <= 1.0))
        throw UsageError("threshold_probability: probability " + std::to_string(p) +
                         " outside [0,1]");
    return !(p * 255.0 < threshold);
}

/// Thresholds a single-channel probability map into a {0,1} mask.
Image threshold_mask(const Image& probabilities, double threshold = kDefaultThreshold);

struct ConfusionCounts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t tn = 0;
    std::size_t fn = 0;

    std::size_t total() const { return tp + fp + tn + fn; }
};

/// Pixel-wise confusion between a predicted and a reference {0,1} mask of
/// equal length; values >= 0.5 count as foreground.
ConfusionCounts confusion(const std::vector<float>& pred, const std::vector<float>& truth);
ConfusionCounts confusion(const Image& pred, const Image& truth);

struct SampleMetrics {
    double accuracy = 0.0;
    double dice = 0.0;
    double iou = 0.0;
};

/// Accuracy, Dice coefficient and intersection-over-union for one sample.
/// When prediction and reference are both empty (tp+fp+fn == 0) the overlap
/// scores are defined as 1.
SampleMetrics sample_metrics(const ConfusionCounts& c);

struct SegmentationMetrics {
    double mean_accuracy = 0.0;
    double mean_dice = 0.0;
    double mean_iou = 0.0;
    std::size_t n_samples = 0;
};

/// Per-sample metric means over a split; never pools pixels across samples.
SegmentationMetrics segmentation_metrics(const std::vector<ConfusionCounts>& per_sample);

struct MetricsReportRow {
    std::string split;
    std::size_t epoch = 0;
    SegmentationMetrics metrics;
};

/// Writes `split,epoch,MA,MDC,MIoU` rows with six decimals, sorted by
/// (split, epoch).
void write_metrics_report(const std::filesystem::path& path, std::vector<MetricsReportRow> rows);

}  // namespace terraseg
