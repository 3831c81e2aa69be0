#include "terraseg/grid.hpp"

#include <exception>
#include <fstream>

#include "terraseg/checkpoint.hpp"
#include "terraseg/errors.hpp"

namespace terraseg {

namespace {

void check_grid_data(const GridData& data) {
    if (data.rgb_train.empty() || data.gray_train.empty())
        throw UsageError("grid: both input renderings need training samples");
    if (data.rgb_train.size() != data.gray_train.size() ||
        data.rgb_val.size() != data.gray_val.size())
        throw UsageError("grid: grayscale and rgb renderings must pair the same fields");
}

GridCellResult run_cell(const GridCell& cell, const GridData& data, const GridSpec& spec,
                        const std::filesystem::path& out_dir) {
    GridCellResult result;
    result.cell = cell;

    const bool gray = cell.mode == InputMode::kGrayscale;
    const std::vector<Sample>& train_set = gray ? data.gray_train : data.rgb_train;
    const std::vector<Sample>& val_set = gray ? data.gray_val : data.rgb_val;
    // Checkpoints are scored on validation data when there is any, else on
    // the training samples themselves (the desk-scale demo overfits a batch).
    const std::vector<Sample>& score_set = val_set.empty() ? train_set : val_set;
    const std::string score_split = val_set.empty() ? "train" : "val";

    UnetConfig unet_cfg = spec.unet;
    unet_cfg.in_channels = input_mode_channels(cell.mode);
    UnetModelF model(unet_cfg, spec.train.seed);

    FitSpec fit_spec;
    fit_spec.train = spec.train;
    fit_spec.loss = cell.loss;
    fit_spec.focal_alpha = spec.focal_alpha;
    fit_spec.focal_gamma = spec.focal_gamma;
    fit_spec.out_dir = out_dir / cell.name;
    const TrainResult trained = fit(model, train_set, val_set, fit_spec);

    std::vector<MetricsReportRow> rows;
    std::vector<ScoredCheckpoint> scored;
    for (const CheckpointRecord& record : trained.checkpoints) {
        load_training_checkpoint(record.path.string(), model.params);
        const SegmentationMetrics metrics = evaluate_model(model, score_set, spec.threshold);
        rows.push_back({score_split, record.epoch, metrics});
        scored.push_back({record.path, record.epoch, metrics.mean_iou});
    }
    result.metrics_csv = out_dir / cell.name / "metrics.csv";
    write_metrics_report(result.metrics_csv, rows);
    result.checkpoint = select_best(scored).path;
    return result;
}

}  // namespace

std::vector<GridCellResult> run_grid(const GridData& data, const GridSpec& spec,
                                     const std::filesystem::path& out_dir) {
    spec.train.validate();
    spec.unet.validate();
    check_grid_data(data);
    std::filesystem::create_directories(out_dir);

    std::vector<GridCellResult> results;
    for (const GridCell& cell : experiment_grid_cells()) {
        try {
            results.push_back(run_cell(cell, data, spec, out_dir));
        } catch (const std::exception& e) {
            GridCellResult failed;
            failed.cell = cell;
            failed.error = e.what();
            results.push_back(failed);
        }
    }

    const auto manifest_path = out_dir / "grid.csv";
    std::ofstream manifest(manifest_path, std::ios::trunc);
    if (!manifest) throw IoError("cannot write grid manifest " + manifest_path.string());
    manifest << "cell,input_mode,loss,checkpoint_path\n";
    for (const GridCellResult& r : results) {
        if (!r.ok()) continue;
        manifest << r.cell.name << ',' << input_mode_name(r.cell.mode) << ','
                 << loss_kind_name(r.cell.loss) << ',' << r.checkpoint.string() << '\n';
    }
    if (!manifest) throw IoError("failed writing grid manifest " + manifest_path.string());
    return results;
}

}  // namespace terraseg
