#include "terraseg/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "terraseg/errors.hpp"

namespace terraseg {

Image threshold_mask(const Image& probabilities, double threshold) {
    if (probabilities.channels != 1)
        throw DimensionError("threshold_mask: expected a single-channel probability map, got " +
                             std::to_string(probabilities.channels) + " channels");
    Image out = Image::zeros(probabilities.height, probabilities.width, 1);
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = threshold_probability(probabilities.data[i], threshold) ? 1.0f : 0.0f;
    return out;
}

ConfusionCounts confusion(const std::vector<float>& pred, const std::vector<float>& truth) {
    if (pred.size() != truth.size())
        throw DimensionError("confusion: prediction has " + std::to_string(pred.size()) +
                             " pixels, reference has " + std::to_string(truth.size()));
    if (pred.empty()) throw UsageError("confusion: empty masks");
    ConfusionCounts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] >= 0.5f;
        const bool t = truth[i] >= 0.5f;
        if (p && t)
            ++c.tp;
        else if (p && !t)
            ++c.fp;
        else if (!p && t)
            ++c.fn;
        else
            ++c.tn;
    }
    return c;
}

ConfusionCounts confusion(const Image& pred, const Image& truth) {
    if (pred.channels != 1 || truth.channels != 1)
        throw DimensionError("confusion: masks must be single-channel");
    if (pred.height != truth.height || pred.width != truth.width)
        throw DimensionError("confusion: extent mismatch " + std::to_string(pred.height) + "x" +
                             std::to_string(pred.width) + " vs " + std::to_string(truth.height) +
                             "x" + std::to_string(truth.width));
    return confusion(pred.data, truth.data);
}

SampleMetrics sample_metrics(const ConfusionCounts& c) {
    if (c.total() == 0) throw UsageError("sample_metrics: empty confusion counts");
    SampleMetrics m;
    m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
    const std::size_t overlap_denom = c.tp + c.fp + c.fn;
    if (overlap_denom == 0) {
        m.dice = 1.0;
        m.iou = 1.0;
    } else {
        m.dice = 2.0 * static_cast<double>(c.tp) / static_cast<double>(c.tp + overlap_denom);
        m.iou = static_cast<double>(c.tp) / static_cast<double>(overlap_denom);
    }
    return m;
}

SegmentationMetrics segmentation_metrics(const std::vector<ConfusionCounts>& per_sample) {
    if (per_sample.empty()) throw UsageError("segmentation_metrics: no samples");
    SegmentationMetrics s;
    s.n_samples = per_sample.size();
    for (const ConfusionCounts& c : per_sample) {
        const SampleMetrics m = sample_metrics(c);
        s.mean_accuracy += m.accuracy;
        s.mean_dice += m.dice;
        s.mean_iou += m.iou;
    }
    const double n = static_cast<double>(s.n_samples);
    s.mean_accuracy /= n;
    s.mean_dice /= n;
    s.mean_iou /= n;
    return s;
}

void write_metrics_report(const std::filesystem::path& path, std::vector<MetricsReportRow> rows) {
    std::sort(rows.begin(), rows.end(), [](const MetricsReportRow& a, const MetricsReportRow& b) {
        return a.split != b.split ? a.split < b.split : a.epoch < b.epoch;
    });
    std::ofstream out(path);
    if (!out) throw IoError("cannot open metrics report for writing: " + path.string());
    out << "split,epoch,MA,MDC,MIoU\n";
    char buf[128];
    for (const MetricsReportRow& row : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%zu,%.6f,%.6f,%.6f", row.split.c_str(), row.epoch,
                      row.metrics.mean_accuracy, row.metrics.mean_dice, row.metrics.mean_iou);
        out << buf << '\n';
    }
    if (!out) throw IoError("failed writing metrics report: " + path.string());
}

}  // namespace terraseg
