// terraseg: command-line front end over the run layer.
//
// Every flag is forwarded as a raw string override into the configuration
// layer, so `--epochs many` fails with the same ConfigError wording as
// `epochs = many` in a file, and precedence is uniformly
// flags > config file > command defaults.

#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "terraseg/run.hpp"

namespace fs = std::filesystem;

namespace {

const std::map<std::string, std::string>& flag_help() {
    static const std::map<std::string, std::string> help = {
        {"data", "dataset directory (for predict: one field directory)"},
        {"out", "output directory for this run"},
        {"preset", "model preset: paper | tiny"},
        {"seed", "RNG seed for init, shuffling, splits, and synthesis"},
        {"threshold", "mask cutoff in the 8-bit sample domain [0,255]"},
        {"lr", "SGD learning rate"},
        {"batch_size", "mini-batch size"},
        {"momentum", "SGD momentum coefficient"},
        {"weight_decay", "L2 weight decay coefficient"},
        {"epochs", "number of training epochs"},
        {"checkpoint_every", "checkpoint cadence in epochs"},
        {"loss", "training loss: bce | focal"},
        {"focal_alpha", "focal loss positive-class weight in (0,1)"},
        {"focal_gamma", "focal loss focusing exponent >= 0"},
        {"resume", "checkpoint to resume from / evaluate / predict with"},
        {"split", "dataset split eval reports on: train | val | test"},
        {"fields", "number of synthetic fields to generate"},
        {"height", "synthetic field height in pixels"},
        {"width", "synthetic field width in pixels"},
        {"random_crops", "random crops per field during augmentation"},
        {"rotations", "rotated crops per field during augmentation"},
        {"angle_min", "minimum rotation angle in degrees"},
        {"angle_max", "maximum rotation angle in degrees"},
    };
    return help;
}

/// One subcommand's flags, kept as raw strings and replayed into the config
/// layer after parsing.
class CommandFlags {
public:
    CommandFlags(CLI::App& app, const std::string& name, const std::string& description,
                 const std::vector<std::string>& keys)
        : cmd_(app.add_subcommand(name, description)) {
        cmd_->add_option("--config", config_file_, "configuration file (key = value lines)")
            ->check(CLI::ExistingFile);
        for (const std::string& key : keys) {
            values_[key];  // create the stable slot first
            cmd_->add_option("--" + key, values_[key], flag_help().at(key));
        }
    }

    CLI::App* cmd() const { return cmd_; }
    bool parsed() const { return cmd_->parsed(); }

    std::optional<fs::path> config_file() const {
        if (cmd_->count("--config") == 0) return std::nullopt;
        return fs::path(config_file_);
    }

    std::vector<std::pair<std::string, std::string>> overrides() const {
        std::vector<std::pair<std::string, std::string>> out;
        for (const auto& [key, value] : values_)
            if (cmd_->count("--" + key) > 0) out.emplace_back(key, value);
        return out;
    }

private:
    CLI::App* cmd_;
    std::string config_file_;
    std::map<std::string, std::string> values_;  // node-based: stable references
};

terraseg::RunConfig resolve(const std::string& command, const CommandFlags& flags) {
    return terraseg::load_run_config(command, flags.config_file(), flags.overrides());
}

void print_metrics(const std::string& label, const terraseg::SegmentationMetrics& m) {
    char line[160];
    std::snprintf(line, sizeof line, "%s MA=%.6f MDC=%.6f MIoU=%.6f", label.c_str(),
                  m.mean_accuracy, m.mean_dice, m.mean_iou);
    std::cout << line << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"soil-sampling site segmentation over multi-attribute field rasters"};
    app.set_version_flag("--version", "terraseg 0.1.0");
    app.require_subcommand(1);

    const std::vector<std::string> train_keys = {
        "data", "out", "preset", "seed", "threshold", "lr", "batch_size",
        "momentum", "weight_decay", "epochs", "checkpoint_every", "loss",
        "focal_alpha", "focal_gamma", "resume"};

    CommandFlags synth(app, "synth", "generate a synthetic field dataset",
                       {"data", "seed", "fields", "height", "width"});
    CommandFlags augment(app, "augment",
                         "crop and rotate raw fields into a training-ready sample set",
                         {"data", "out", "seed", "random_crops", "rotations", "angle_min",
                          "angle_max"});
    CommandFlags train(app, "train", "train the segmentation model", train_keys);
    CommandFlags eval(app, "eval", "score a trained checkpoint on one dataset split",
                      {"data", "out", "preset", "seed", "threshold", "resume", "split"});
    CommandFlags predict(app, "predict",
                         "run one field through a trained checkpoint and emit maps",
                         {"data", "out", "preset", "seed", "threshold", "resume"});
    CommandFlags grid(app, "baseline-grid",
                      "train the convolutional baseline over the 2x2 input/loss grid",
                      {"data", "out", "preset", "seed", "threshold", "lr", "batch_size",
                       "momentum", "weight_decay", "epochs", "checkpoint_every",
                       "focal_alpha", "focal_gamma"});

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (synth.parsed()) {
            const terraseg::RunConfig cfg = resolve("synth", synth);
            terraseg::run_synth(cfg);
            std::cout << "wrote " << cfg.fields << " fields under "
                      << (cfg.data_dir / "fields").string() << '\n';
        } else if (augment.parsed()) {
            const terraseg::RunConfig cfg = resolve("augment", augment);
            terraseg::run_augment(cfg);
            std::cout << "augmented dataset written to " << cfg.out_dir.string() << '\n';
        } else if (train.parsed()) {
            const terraseg::RunConfig cfg = resolve("train", train);
            terraseg::run_train(cfg);
            std::cout << "training complete; outputs in " << cfg.out_dir.string() << '\n';
            std::ifstream best(cfg.out_dir / "best.txt");
            std::string best_path;
            if (best && std::getline(best, best_path) && !best_path.empty())
                std::cout << "best checkpoint: " << best_path << '\n';
        } else if (eval.parsed()) {
            const terraseg::RunConfig cfg = resolve("eval", eval);
            const terraseg::SegmentationMetrics m = terraseg::run_eval(cfg);
            print_metrics("split=" + cfg.split, m);
        } else if (predict.parsed()) {
            const terraseg::RunConfig cfg = resolve("predict", predict);
            terraseg::run_predict(cfg);
            std::cout << "wrote probability.png, mask.png, overlay.png to "
                      << cfg.out_dir.string() << '\n';
        } else if (grid.parsed()) {
            const terraseg::RunConfig cfg = resolve("baseline-grid", grid);
            const std::vector<terraseg::GridCellResult> results =
                terraseg::run_baseline_grid(cfg);
            bool any_failed = false;
            for (const terraseg::GridCellResult& r : results) {
                if (r.ok()) {
                    std::cout << r.cell.name << ": ok " << r.checkpoint.string() << '\n';
                } else {
                    std::cout << r.cell.name << ": failed (" << r.error << ")\n";
                    any_failed = true;
                }
            }
            if (any_failed) {
                std::cerr << "error: one or more grid cells failed; see "
                          << (cfg.out_dir / "grid.csv").string() << '\n';
                return 1;
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
