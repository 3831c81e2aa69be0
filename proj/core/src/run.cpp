#include "terraseg/run.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>

#include "terraseg/augment.hpp"
#include "terraseg/checkpoint.hpp"
#include "terraseg/errors.hpp"
#include "terraseg/field.hpp"
#include "terraseg/model.hpp"
#include "terraseg/rng.hpp"
#include "terraseg/synth.hpp"

namespace terraseg {

namespace fs = std::filesystem;

namespace {

void freeze_config(const RunConfig& cfg, const fs::path& dir, const std::string& command) {
    fs::create_directories(dir);
    write_frozen_config(cfg, dir / ("config." + command + ".ini"));
}

fs::path require_dir(const fs::path& dir, const std::string& what) {
    if (dir.empty()) throw UsageError(what + " directory not set");
    return dir;
}

std::vector<std::string> list_field_ids(const fs::path& fields_dir) {
    if (!fs::is_directory(fields_dir))
        throw UsageError("no field dataset at " + fields_dir.string());
    std::vector<std::string> ids;
    for (const auto& entry : fs::directory_iterator(fields_dir))
        if (entry.is_directory()) ids.push_back(entry.path().filename().string());
    std::sort(ids.begin(), ids.end());
    if (ids.empty()) throw UsageError("no fields found under " + fields_dir.string());
    return ids;
}

void add_sample(SplitSamples& bucket, const std::string& id, const FieldStack& stack,
                std::size_t input_size) {
    const FieldStack* source = &stack;
    FieldStack cropped;
    if (input_size > 0 &&
        (stack.height() != input_size || stack.width() != input_size)) {
        cropped = to_model_input(stack, input_size);
        source = &cropped;
    }
    const Tensor<float> target = mask_to_target(*source);
    bucket.rgb.push_back(Sample{id, stack_to_input(*source), target});
    bucket.gray.push_back(Sample{id, stack_to_grayscale_input(*source), target});
}

SplitSamples& bucket_for(Dataset& ds, Split split) {
    switch (split) {
        case Split::kTrain: return ds.train;
        case Split::kVal: return ds.val;
        default: return ds.test;
    }
}

}  // namespace

Dataset load_dataset(const RunConfig& cfg, std::size_t input_size) {
    const fs::path data = require_dir(cfg.data_dir, "data");
    Dataset ds;
    const fs::path manifest_path = data / "manifest.csv";
    if (fs::exists(manifest_path)) {
        for (const ManifestRow& row : read_manifest(manifest_path)) {
            const FieldStack stack = load_field(data / "samples" / row.sample_id);
            add_sample(bucket_for(ds, row.split), row.sample_id, stack, input_size);
        }
        return ds;
    }

    const std::vector<std::string> ids = list_field_ids(data / "fields");
    const std::map<std::string, Split> splits =
        build_splits(ids, SplitFractions{}, cfg.train.seed);
    for (const std::string& id : ids) {
        const FieldStack stack = load_field(data / "fields" / id);
        add_sample(bucket_for(ds, splits.at(id)), id, stack, input_size);
    }
    return ds;
}

void run_synth(const RunConfig& cfg) {
    cfg.validate();
    const fs::path data = require_dir(cfg.data_dir, "data");
    const fs::path fields = data / "fields";
    fs::create_directories(fields);
    for (std::size_t i = 0; i < cfg.fields; ++i) {
        const FieldStack stack =
            synth_field(cfg.field_height, cfg.field_width, cfg.train.seed + i);
        save_field(fields / stack.id, stack);
    }
    freeze_config(cfg, data, "synth");
}

void run_augment(const RunConfig& cfg) {
    cfg.validate();
    const fs::path data = require_dir(cfg.data_dir, "data");
    const fs::path out = require_dir(cfg.out_dir, "output");
    const std::vector<std::string> ids = list_field_ids(data / "fields");
    const std::map<std::string, Split> splits =
        build_splits(ids, SplitFractions{}, cfg.train.seed);

    AugmentSpec spec;
    spec.n_random_crops = cfg.random_crops;
    spec.n_rotations = cfg.rotations;
    spec.rotation_min_deg = cfg.angle_min;
    spec.rotation_max_deg = cfg.angle_max;

    fs::create_directories(out / "samples");
    std::vector<ManifestRow> rows;
    std::vector<std::string> skipped;
    std::vector<Image> masks;
    for (const std::string& id : ids) {
        const FieldStack stack = load_field(data / "fields" / id);
        spec.seed = derive_seed(cfg.train.seed, hash_name(id));
        AugmentResult result = augment(stack, spec);
        skipped.insert(skipped.end(), result.skipped.begin(), result.skipped.end());
        for (AugmentedSample& sample : result.samples) {
            const std::string sample_id = id + "-" + sample.label;
            sample.stack.id = sample_id;
            save_field(out / "samples" / sample_id, sample.stack);
            rows.push_back(ManifestRow{sample_id, id, splits.at(id), sample.label});
            masks.push_back(sample.stack.mask);
        }
    }
    if (rows.empty())
        throw UsageError("augmentation produced no samples; every field was rejected");
    write_manifest(out / "manifest.csv", rows);

    const ImbalanceStats stats = imbalance_stats(masks);
    std::ofstream imb(out / "imbalance.csv", std::ios::trunc);
    if (!imb) throw IoError("cannot write imbalance statistics");
    char line[256];
    std::snprintf(line, sizeof line, "n_masks,n_empty,min,max,mean,median,stddev\n%zu,%zu,%.6f,%.6f,%.6f,%.6f,%.6f\n",
                  stats.n_masks, stats.n_empty, stats.min, stats.max, stats.mean, stats.median,
                  stats.stddev);
    imb << line;

    if (!skipped.empty()) {
        std::ofstream skip_log(out / "skipped.txt", std::ios::trunc);
        for (const std::string& reason : skipped) skip_log << reason << '\n';
    }
    freeze_config(cfg, out, "augment");
}

void run_train(const RunConfig& cfg) {
    cfg.validate();
    const fs::path out = require_dir(cfg.out_dir, "output");
    const ModelConfig model_cfg = model_config_by_name(cfg.preset);
    SegModelF model(model_cfg, cfg.train.seed);
    const Dataset ds = load_dataset(cfg, model_cfg.input_size);

    FitSpec spec;
    spec.train = cfg.train;
    spec.loss = parse_loss_kind(cfg.loss);
    spec.focal_alpha = cfg.focal_alpha;
    spec.focal_gamma = cfg.focal_gamma;
    spec.out_dir = out;
    spec.resume_from = cfg.resume;
    const TrainResult result = fit(model, ds.train.rgb, ds.val.rgb, spec);

    // Score every checkpoint this run produced and mark the best.
    const bool has_val = !ds.val.rgb.empty();
    const std::vector<Sample>& score_set = has_val ? ds.val.rgb : ds.train.rgb;
    const std::string score_split = has_val ? "val" : "train";
    std::vector<MetricsReportRow> rows;
    std::vector<ScoredCheckpoint> scored;
    for (const CheckpointRecord& record : result.checkpoints) {
        load_training_checkpoint(record.path.string(), model.params);
        const SegmentationMetrics metrics = evaluate_model(model, score_set, cfg.threshold);
        rows.push_back({score_split, record.epoch, metrics});
        scored.push_back({record.path, record.epoch, metrics.mean_iou});
    }
    if (!scored.empty()) {
        write_metrics_report(out / "metrics.csv", rows);
        std::ofstream best(out / "best.txt", std::ios::trunc);
        best << select_best(scored).path.string() << '\n';
    }
    freeze_config(cfg, out, "train");
}

SegmentationMetrics run_eval(const RunConfig& cfg) {
    cfg.validate();
    const fs::path out = require_dir(cfg.out_dir, "output");
    if (cfg.resume.empty())
        throw UsageError("eval needs resume=<checkpoint> pointing at a trained model");
    const ModelConfig model_cfg = model_config_by_name(cfg.preset);
    SegModelF model(model_cfg, cfg.train.seed);
    const TrainingSnapshot snapshot =
        load_training_checkpoint(cfg.resume.string(), model.params);

    const Dataset ds = load_dataset(cfg, model_cfg.input_size);
    const Split split = parse_split(cfg.split);
    const std::vector<Sample>& samples = ds.split(split).rgb;
    if (samples.empty())
        throw UsageError("split '" + cfg.split + "' holds no samples in this dataset");

    const SegmentationMetrics metrics = evaluate_model(model, samples, cfg.threshold);
    fs::create_directories(out);
    write_metrics_report(out / "metrics.csv", {{cfg.split, snapshot.epoch, metrics}});
    freeze_config(cfg, out, "eval");
    return metrics;
}

void run_predict(const RunConfig& cfg) {
    cfg.validate();
    const fs::path out = require_dir(cfg.out_dir, "output");
    if (cfg.resume.empty())
        throw UsageError("predict needs resume=<checkpoint> pointing at a trained model");
    const ModelConfig model_cfg = model_config_by_name(cfg.preset);
    SegModelF model(model_cfg, cfg.train.seed);
    load_training_checkpoint(cfg.resume.string(), model.params);

    const FieldStack stack = load_field(require_dir(cfg.data_dir, "data"));
    NoGradGuard freeze;
    const Tensor<float> probs = model.forward(stack_to_input(stack));

    Image prob_image = Image::zeros(probs.dim(1), probs.dim(2), 1);
    const std::vector<float>& prob_values = probs.values();
    std::copy(prob_values.begin(), prob_values.end(), prob_image.data.begin());
    const Image mask = threshold_mask(prob_image, cfg.threshold);

    // The overlay marks predicted sampling sites in red over the NDVI raster.
    Image overlay = stack.ndvi;
    for (std::size_t px = 0; px < mask.pixels(); ++px) {
        if (mask.data[px] < 0.5f) continue;
        overlay.plane(0)[px] = 1.0f;
        overlay.plane(1)[px] *= 0.3f;
        overlay.plane(2)[px] *= 0.3f;
    }

    fs::create_directories(out);
    write_png(out / "probability.png", prob_image);
    write_png(out / "mask.png", mask);
    write_png(out / "overlay.png", overlay);
    freeze_config(cfg, out, "predict");
}

std::vector<GridCellResult> run_baseline_grid(const RunConfig& cfg) {
    cfg.validate();
    const fs::path out = require_dir(cfg.out_dir, "output");
    const ModelConfig model_cfg = model_config_by_name(cfg.preset);
    const Dataset ds = load_dataset(cfg, model_cfg.input_size);

    GridData data;
    data.rgb_train = ds.train.rgb;
    data.gray_train = ds.train.gray;
    data.rgb_val = ds.val.rgb;
    data.gray_val = ds.val.gray;

    GridSpec spec;
    spec.train = cfg.train;
    spec.unet.batch_size = cfg.train.batch_size;
    spec.focal_alpha = cfg.focal_alpha;
    spec.focal_gamma = cfg.focal_gamma;
    spec.threshold = cfg.threshold;

    const std::vector<GridCellResult> results = run_grid(data, spec, out);
    freeze_config(cfg, out, "baseline-grid");
    return results;
}

}  // namespace terraseg
