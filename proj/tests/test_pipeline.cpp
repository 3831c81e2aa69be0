// End-to-end checks of the run commands: synthesize -> augment -> train ->
// eval -> predict -> baseline grid, all through the same entry points the
// command-line tool calls.

#include <gtest/gtest.h>
#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "terraseg/config.hpp"
#include "terraseg/errors.hpp"
#include "terraseg/field.hpp"
#include "terraseg/image.hpp"
#include "terraseg/run.hpp"

using namespace terraseg;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        dir_ = fs::temp_directory_path() /
               ("terraseg-pipe-" + std::to_string(::getpid()) + "-" +
                std::to_string(counter.fetch_add(1)));
        fs::create_directories(dir_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(dir_, ec);
    }
    fs::path path(const std::string& name) const { return dir_ / name; }
    const fs::path& root() const { return dir_; }

private:
    fs::path dir_;
};

std::string slurp_text(const fs::path& path) {
    std::ifstream file(path);
    std::ostringstream out;
    out << file.rdbuf();
    return out.str();
}

std::size_t count_lines(const std::string& text) {
    std::size_t n = 0;
    for (char c : text)
        if (c == '\n') ++n;
    return n;
}

/// Synthesizes `fields` square fields of edge `size` under <root>/data.
RunConfig synth_fields(const fs::path& root, std::size_t fields, std::size_t size,
                       std::uint64_t seed = 0) {
    RunConfig cfg = default_run_config("synth");
    cfg.data_dir = root / "data";
    cfg.fields = fields;
    cfg.field_height = size;
    cfg.field_width = size;
    cfg.train.seed = seed;
    run_synth(cfg);
    return cfg;
}

}  // namespace

TEST(PipelineSynth, WritesFieldRastersAndFrozenConfig) {
    TempDir tmp;
    RunConfig cfg = default_run_config("synth");
    cfg.data_dir = tmp.path("data");
    cfg.fields = 2;
    cfg.field_height = 96;
    cfg.field_width = 80;
    run_synth(cfg);

    for (const std::string id : {"synth-0", "synth-1"}) {
        const fs::path dir = tmp.path("data") / "fields" / id;
        for (const std::string name :
             {"aspect.png", "flow.png", "slope.png", "ndvi.png", "yield.png", "mask.png"})
            EXPECT_TRUE(fs::exists(dir / name)) << (dir / name);
        const FieldStack stack = load_field(dir);
        EXPECT_EQ(stack.height(), 96u);
        EXPECT_EQ(stack.width(), 80u);
        for (float v : stack.mask.data) EXPECT_TRUE(v == 0.0f || v == 1.0f);
    }

    // The frozen config sits next to the data and parses back unchanged.
    const fs::path frozen = tmp.path("data") / "config.synth.ini";
    ASSERT_TRUE(fs::exists(frozen));
    const RunConfig back = load_run_config("synth", frozen, {});
    EXPECT_EQ(back.fields, 2u);
    EXPECT_EQ(back.field_height, 96u);
    EXPECT_EQ(back.field_width, 80u);
}

TEST(PipelineSynth, SameSeedReproducesIdenticalFields) {
    TempDir a;
    TempDir b;
    synth_fields(a.root(), 1, 64, 5);
    synth_fields(b.root(), 1, 64, 5);
    const fs::path field = fs::path("data") / "fields" / "synth-5";
    for (const std::string name : {"slope.png", "mask.png"}) {
        const std::string left = slurp_text(a.root() / field / name);
        const std::string right = slurp_text(b.root() / field / name);
        EXPECT_EQ(left, right) << name;
    }
}

TEST(PipelineTrainEvalPredict, FullLoopOnSyntheticFields) {
    TempDir tmp;
    synth_fields(tmp.root(), 6, 128);

    // -- train ---------------------------------------------------------------
    RunConfig train_cfg = default_run_config("train");
    train_cfg.data_dir = tmp.path("data");
    train_cfg.out_dir = tmp.path("runs/tiny");
    train_cfg.train.epochs = 2;
    train_cfg.train.checkpoint_every = 1;
    train_cfg.train.batch_size = 2;
    run_train(train_cfg);

    const fs::path out = tmp.path("runs/tiny");
    ASSERT_TRUE(fs::exists(out / "checkpoint-00001.sseg"));
    ASSERT_TRUE(fs::exists(out / "checkpoint-00002.sseg"));
    ASSERT_TRUE(fs::exists(out / "config.train.ini"));

    const std::string curve = slurp_text(out / "losses.csv");
    EXPECT_EQ(curve.rfind("epoch,train_loss,val_loss\n", 0), 0u) << curve;
    EXPECT_EQ(count_lines(curve), 3u) << curve;  // header + one row per epoch

    const std::string metrics_csv = slurp_text(out / "metrics.csv");
    EXPECT_EQ(metrics_csv.rfind("split,epoch,MA,MDC,MIoU\n", 0), 0u) << metrics_csv;
    EXPECT_EQ(count_lines(metrics_csv), 3u) << metrics_csv;

    const std::string best = slurp_text(out / "best.txt");
    ASSERT_FALSE(best.empty());
    const fs::path best_path(best.substr(0, best.find('\n')));
    EXPECT_TRUE(fs::exists(best_path)) << best_path;

    // -- eval ----------------------------------------------------------------
    RunConfig eval_cfg = default_run_config("eval");
    eval_cfg.data_dir = tmp.path("data");
    eval_cfg.out_dir = tmp.path("runs/eval");
    eval_cfg.resume = best_path;
    eval_cfg.split = "train";
    const SegmentationMetrics scores = run_eval(eval_cfg);
    EXPECT_GE(scores.mean_accuracy, 0.0);
    EXPECT_LE(scores.mean_accuracy, 1.0);
    EXPECT_GE(scores.mean_iou, 0.0);
    EXPECT_LE(scores.mean_iou, 1.0);
    EXPECT_TRUE(fs::exists(tmp.path("runs/eval") / "metrics.csv"));
    EXPECT_TRUE(fs::exists(tmp.path("runs/eval") / "config.eval.ini"));

    RunConfig no_resume = eval_cfg;
    no_resume.resume.clear();
    EXPECT_THROW(run_eval(no_resume), UsageError);

    // -- predict -------------------------------------------------------------
    RunConfig pred_cfg = default_run_config("predict");
    pred_cfg.data_dir = tmp.path("data") / "fields" / "synth-0";
    pred_cfg.out_dir = tmp.path("runs/pred");
    pred_cfg.resume = best_path;
    run_predict(pred_cfg);

    const Image prob = read_png(tmp.path("runs/pred") / "probability.png");
    EXPECT_EQ(prob.channels, 1u);
    EXPECT_EQ(prob.height, 128u);
    EXPECT_EQ(prob.width, 128u);
    for (float v : prob.data) {
        EXPECT_GE(v, 0.0f);
        EXPECT_LE(v, 1.0f);
    }
    const Image mask = read_png(tmp.path("runs/pred") / "mask.png");
    EXPECT_EQ(mask.channels, 1u);
    for (float v : mask.data) EXPECT_TRUE(v == 0.0f || v == 1.0f);
    const Image overlay = read_png(tmp.path("runs/pred") / "overlay.png");
    EXPECT_EQ(overlay.channels, 3u);
    EXPECT_TRUE(fs::exists(tmp.path("runs/pred") / "config.predict.ini"));

    RunConfig pred_no_resume = pred_cfg;
    pred_no_resume.resume.clear();
    EXPECT_THROW(run_predict(pred_no_resume), UsageError);
}

TEST(PipelineAugment, BuildsSamplesManifestAndImbalanceReport) {
    TempDir tmp;
    RunConfig synth_cfg = default_run_config("synth");
    synth_cfg.data_dir = tmp.path("data");
    synth_cfg.fields = 3;  // the splitter needs one field per split at minimum
    synth_cfg.field_height = 900;
    synth_cfg.field_width = 1100;
    run_synth(synth_cfg);

    RunConfig aug_cfg = default_run_config("augment");
    aug_cfg.data_dir = tmp.path("data");
    aug_cfg.out_dir = tmp.path("aug");
    aug_cfg.random_crops = 1;
    aug_cfg.rotations = 1;
    run_augment(aug_cfg);

    // Four centre crops fit a 900x1100 field; plus one random crop and one
    // rotation that makes six samples per field, every one at the working edge.
    const std::string manifest = slurp_text(tmp.path("aug") / "manifest.csv");
    EXPECT_EQ(count_lines(manifest), 19u) << manifest;  // header + 3 fields x 6
    EXPECT_NE(manifest.find("synth-0"), std::string::npos);
    EXPECT_NE(manifest.find("synth-2"), std::string::npos);

    std::size_t sample_dirs = 0;
    for (const auto& entry : fs::directory_iterator(tmp.path("aug") / "samples")) {
        ASSERT_TRUE(entry.is_directory());
        const FieldStack sample = load_field(entry.path());
        EXPECT_EQ(sample.height(), 572u);
        EXPECT_EQ(sample.width(), 572u);
        for (float v : sample.mask.data) ASSERT_TRUE(v == 0.0f || v == 1.0f);
        ++sample_dirs;
    }
    EXPECT_EQ(sample_dirs, 18u);

    const std::string imbalance = slurp_text(tmp.path("aug") / "imbalance.csv");
    EXPECT_EQ(imbalance.rfind("n_masks,n_empty,min,max,mean,median,stddev\n", 0), 0u)
        << imbalance;
    EXPECT_EQ(count_lines(imbalance), 2u);
    EXPECT_TRUE(fs::exists(tmp.path("aug") / "config.augment.ini"));

    // Manifest-mode loading bridges the 572 working edge down to the model
    // input edge, so a short training run consumes the augmented set directly.
    RunConfig train_cfg = default_run_config("train");
    train_cfg.data_dir = tmp.path("aug");
    train_cfg.out_dir = tmp.path("runs/aug");
    train_cfg.train.epochs = 1;
    train_cfg.train.checkpoint_every = 1;
    run_train(train_cfg);
    EXPECT_TRUE(fs::exists(tmp.path("runs/aug") / "checkpoint-00001.sseg"));
    EXPECT_TRUE(fs::exists(tmp.path("runs/aug") / "losses.csv"));
}

TEST(PipelineBaselineGrid, RunsAllFourCellsOnSyntheticFields) {
    TempDir tmp;
    synth_fields(tmp.root(), 3, 128);

    RunConfig cfg = default_run_config("baseline-grid");
    cfg.data_dir = tmp.path("data");
    cfg.out_dir = tmp.path("grid");
    cfg.train.epochs = 1;
    cfg.train.checkpoint_every = 1;
    const std::vector<GridCellResult> results = run_baseline_grid(cfg);

    ASSERT_EQ(results.size(), 4u);
    for (const GridCellResult& result : results) {
        EXPECT_TRUE(result.ok()) << result.cell.name << ": " << result.error;
        EXPECT_TRUE(fs::exists(result.checkpoint)) << result.checkpoint;
        EXPECT_TRUE(fs::exists(result.metrics_csv)) << result.metrics_csv;
    }

    const std::string manifest = slurp_text(tmp.path("grid") / "grid.csv");
    EXPECT_EQ(manifest.rfind("cell,input_mode,loss,checkpoint_path\n", 0), 0u) << manifest;
    EXPECT_EQ(count_lines(manifest), 5u) << manifest;
    for (const std::string cell : {"gray-bce", "gray-focal", "rgb-bce", "rgb-focal"})
        EXPECT_NE(manifest.find(cell), std::string::npos) << cell;
    EXPECT_TRUE(fs::exists(tmp.path("grid") / "config.baseline-grid.ini"));
}

TEST(PipelineDataset, MissingDataDirectoryIsRejected) {
    RunConfig cfg = default_run_config("train");
    cfg.data_dir = "/nonexistent/terraseg-data";
    EXPECT_THROW(load_dataset(cfg, 128), UsageError);
    cfg.data_dir.clear();
    EXPECT_THROW(load_dataset(cfg, 128), UsageError);
}
