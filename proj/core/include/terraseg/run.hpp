#pragma once

// Command orchestration shared by the command-line tool and the tests. Each
// run_* function performs one end-to-end command against a RunConfig, writes
// its artifacts (plus a frozen copy of the resolved config) under
// cfg.out_dir, and throws on failure.
//
// Dataset layout on disk:
//   <data>/fields/<field-id>/{aspect,flow,slope,ndvi,yield,mask}.png   raw fields
//   <data>/manifest.csv + <data>/samples/<sample-id>/...               augmented set
// Training and evaluation prefer the augmented manifest when present and fall
// back to whole raw fields (split deterministically by the run seed).

#include <filesystem>
#include <string>
#include <vector>

#include "terraseg/config.hpp"
#include "terraseg/grid.hpp"
#include "terraseg/metrics.hpp"
#include "terraseg/splits.hpp"
#include "terraseg/train.hpp"

namespace terraseg {

/// Samples of one split in both input renderings.
struct SplitSamples {
    std::vector<Sample> rgb;   // 15-channel stacked attribute triples
    std::vector<Sample> gray;  // 5-channel luminance planes
};

struct Dataset {
    SplitSamples train;
    SplitSamples val;
    SplitSamples test;

    const SplitSamples& split(Split which) const {
        switch (which) {
            case Split::kTrain: return train;
            case Split::kVal: return val;
            default: return test;
        }
    }
};

/// Loads the dataset for a run (manifest mode or raw-field mode; see header
/// comment). `input_size` > 0 centre-crops every sample to that edge, as the
/// model-input bridge requires; 0 keeps native extents.
Dataset load_dataset(const RunConfig& cfg, std::size_t input_size);

/// Generates cfg.fields synthetic fields under <data>/fields.
void run_synth(const RunConfig& cfg);

/// Expands every raw field into its augmented samples under <out>/samples,
/// writes <out>/manifest.csv, and reports mask imbalance statistics.
void run_augment(const RunConfig& cfg);

/// Trains the configured preset; emits checkpoints, losses.csv, per-checkpoint
/// validation metrics (metrics.csv), and best.txt naming the checkpoint with
/// the highest validation MIoU.
void run_train(const RunConfig& cfg);

/// Scores a trained checkpoint (cfg.resume) on the configured split and
/// writes metrics.csv.
SegmentationMetrics run_eval(const RunConfig& cfg);

/// Full inference on one field directory (cfg.data_dir): probability map,
/// thresholded mask, and a mask-on-NDVI overlay, each as a PNG in cfg.out_dir.
void run_predict(const RunConfig& cfg);

/// The four-cell comparison experiment; returns the per-cell outcomes.
std::vector<GridCellResult> run_baseline_grid(const RunConfig& cfg);

}  // namespace terraseg
