#include <gtest/gtest.h>
#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>

#include "terraseg/config.hpp"
#include "terraseg/errors.hpp"

using namespace terraseg;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        dir_ = fs::temp_directory_path() /
               ("terraseg-cfg-" + std::to_string(::getpid()) + "-" +
                std::to_string(counter.fetch_add(1)));
        fs::create_directories(dir_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(dir_, ec);
    }
    fs::path path(const std::string& name) const { return dir_ / name; }

private:
    fs::path dir_;
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
}

std::string message_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const std::exception& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(RunConfigDefaults, TrainCommandUsesStandardProtocol) {
    const RunConfig cfg = default_run_config("train");
    EXPECT_EQ(cfg.preset, "tiny");
    EXPECT_DOUBLE_EQ(cfg.threshold, 190.0);
    EXPECT_EQ(cfg.train.batch_size, 4u);
    EXPECT_DOUBLE_EQ(cfg.train.learning_rate, 0.001);
    EXPECT_DOUBLE_EQ(cfg.train.momentum, 0.9);
    EXPECT_DOUBLE_EQ(cfg.train.weight_decay, 0.0001);
    EXPECT_EQ(cfg.train.epochs, 300u);
    EXPECT_EQ(cfg.train.checkpoint_every, 50u);
    EXPECT_EQ(cfg.loss, "bce");
    EXPECT_DOUBLE_EQ(cfg.focal_alpha, 0.25);
    EXPECT_DOUBLE_EQ(cfg.focal_gamma, 2.0);
    EXPECT_EQ(cfg.split, "test");
    EXPECT_EQ(cfg.fields, 8u);
    EXPECT_EQ(cfg.field_height, 640u);
    EXPECT_EQ(cfg.field_width, 640u);
    EXPECT_EQ(cfg.random_crops, 10u);
    EXPECT_EQ(cfg.rotations, 20u);
    EXPECT_DOUBLE_EQ(cfg.angle_min, 5.0);
    EXPECT_DOUBLE_EQ(cfg.angle_max, 60.0);
    EXPECT_NO_THROW(cfg.validate());
}

TEST(RunConfigDefaults, BaselineGridUsesComparisonProtocol) {
    const RunConfig cfg = default_run_config("baseline-grid");
    EXPECT_EQ(cfg.train.batch_size, 32u);
    EXPECT_EQ(cfg.train.checkpoint_every, 500u);
    EXPECT_DOUBLE_EQ(cfg.focal_alpha, 0.75);
    // Everything the comparison protocol does not override stays standard.
    EXPECT_DOUBLE_EQ(cfg.train.learning_rate, 0.001);
    EXPECT_DOUBLE_EQ(cfg.train.momentum, 0.9);
    EXPECT_NO_THROW(cfg.validate());
}

TEST(ConfigText, EmptyBodyLeavesDefaultsUntouched) {
    RunConfig cfg = default_run_config("train");
    apply_config_text(cfg, "", "empty.ini");
    EXPECT_EQ(cfg.train.batch_size, 4u);
    EXPECT_DOUBLE_EQ(cfg.train.learning_rate, 0.001);
    EXPECT_DOUBLE_EQ(cfg.threshold, 190.0);
}

TEST(ConfigText, ParsesKeysCommentsSectionsAndBom) {
    RunConfig cfg = default_run_config("train");
    const std::string body =
        "\xEF\xBB\xBF# experiment settings\n"
        "[model]\n"
        "preset = paper\n"
        "\n"
        "[optimizer]   # grouping only\n"
        "lr = 0.01     # tuned down\n"
        "batch_size=2\n"
        "  epochs  =  7  \n"
        "seed = 123\n"
        "loss = focal\n"
        "focal_alpha = 0.5\n"
        "split = val\n"
        "data = /tmp/somewhere\n";
    apply_config_text(cfg, body, "run.ini");
    EXPECT_EQ(cfg.preset, "paper");
    EXPECT_DOUBLE_EQ(cfg.train.learning_rate, 0.01);
    EXPECT_EQ(cfg.train.batch_size, 2u);
    EXPECT_EQ(cfg.train.epochs, 7u);
    EXPECT_EQ(cfg.train.seed, 123u);
    EXPECT_EQ(cfg.loss, "focal");
    EXPECT_DOUBLE_EQ(cfg.focal_alpha, 0.5);
    EXPECT_EQ(cfg.split, "val");
    EXPECT_EQ(cfg.data_dir, fs::path("/tmp/somewhere"));
}

TEST(ConfigText, UnknownKeyNamesKeyAndLine) {
    RunConfig cfg = default_run_config("train");
    const std::string body = "lr = 0.01\nbatchsize = 4\n";
    const std::string msg =
        message_of([&] { apply_config_text(cfg, body, "run.ini"); });
    EXPECT_NE(msg.find("batchsize"), std::string::npos) << msg;
    EXPECT_NE(msg.find("line 2 of run.ini"), std::string::npos) << msg;
    EXPECT_THROW(apply_config_text(cfg, body, "run.ini"), ConfigError);
}

TEST(ConfigText, UnparsableValueNamesKeyValueAndLine) {
    RunConfig cfg = default_run_config("train");
    const std::string msg = message_of(
        [&] { apply_config_text(cfg, "epochs = soon\n", "run.ini"); });
    EXPECT_NE(msg.find("epochs"), std::string::npos) << msg;
    EXPECT_NE(msg.find("soon"), std::string::npos) << msg;
    EXPECT_NE(msg.find("line 1 of run.ini"), std::string::npos) << msg;

    EXPECT_THROW(apply_config_value(cfg, "lr", "fast", "flag --lr"), ConfigError);
    EXPECT_THROW(apply_config_value(cfg, "batch_size", "-3", "flag --batch_size"),
                 ConfigError);
    EXPECT_THROW(apply_config_value(cfg, "batch_size", "2.5", "flag --batch_size"),
                 ConfigError);
    EXPECT_THROW(apply_config_value(cfg, "preset", "huge", "flag --preset"), ConfigError);
    EXPECT_THROW(apply_config_value(cfg, "loss", "dice", "flag --loss"), ConfigError);
    EXPECT_THROW(apply_config_value(cfg, "split", "holdout", "flag --split"), ConfigError);
}

TEST(ConfigText, RejectsMalformedLines) {
    RunConfig cfg = default_run_config("train");
    EXPECT_THROW(apply_config_text(cfg, "just words\n", "run.ini"), ConfigError);
    EXPECT_THROW(apply_config_text(cfg, "= 3\n", "run.ini"), ConfigError);
    EXPECT_THROW(apply_config_text(cfg, "[unclosed\n", "run.ini"), ConfigError);
}

TEST(LoadRunConfig, FlagsBeatFileBeatsDefaults) {
    TempDir tmp;
    const fs::path file = tmp.path("run.ini");
    write_text(file, "lr = 0.01\nepochs = 42\n");

    const RunConfig cfg =
        load_run_config("train", file, {{"lr", "0.02"}, {"seed", "9"}});
    EXPECT_DOUBLE_EQ(cfg.train.learning_rate, 0.02);  // flag wins over file
    EXPECT_EQ(cfg.train.epochs, 42u);                 // file wins over default
    EXPECT_EQ(cfg.train.seed, 9u);                    // flag wins over default
    EXPECT_EQ(cfg.train.batch_size, 4u);              // untouched default
}

TEST(LoadRunConfig, MissingFileRaisesIoError) {
    EXPECT_THROW(load_run_config("train", fs::path("/nonexistent/run.ini"), {}),
                 IoError);
}

TEST(LoadRunConfig, FlagErrorNamesTheFlag) {
    const std::string msg = message_of(
        [&] { load_run_config("train", std::nullopt, {{"epochs", "many"}}); });
    EXPECT_NE(msg.find("flag --epochs"), std::string::npos) << msg;
}

TEST(FrozenConfig, RoundTripsEveryField) {
    TempDir tmp;
    RunConfig cfg = default_run_config("train");
    cfg.preset = "paper";
    cfg.threshold = 127.5;
    cfg.data_dir = "/data/run7";
    cfg.out_dir = "/out/run7";
    cfg.train.seed = 77;
    cfg.train.learning_rate = 0.0123456789012345678;
    cfg.train.batch_size = 6;
    cfg.train.momentum = 0.85;
    cfg.train.weight_decay = 3e-5;
    cfg.train.epochs = 12;
    cfg.train.checkpoint_every = 3;
    cfg.loss = "focal";
    cfg.focal_alpha = 0.75;
    cfg.focal_gamma = 1.5;
    cfg.resume = "/out/run6/checkpoint-00010.sseg";
    cfg.split = "val";
    cfg.fields = 3;
    cfg.field_height = 700;
    cfg.field_width = 900;
    cfg.random_crops = 4;
    cfg.rotations = 2;
    cfg.angle_min = 10.0;
    cfg.angle_max = 45.0;

    const fs::path frozen = tmp.path("config.train.ini");
    write_frozen_config(cfg, frozen);

    const RunConfig back = load_run_config("train", frozen, {});
    EXPECT_EQ(back.preset, cfg.preset);
    EXPECT_DOUBLE_EQ(back.threshold, cfg.threshold);
    EXPECT_EQ(back.data_dir, cfg.data_dir);
    EXPECT_EQ(back.out_dir, cfg.out_dir);
    EXPECT_EQ(back.train.seed, cfg.train.seed);
    EXPECT_DOUBLE_EQ(back.train.learning_rate, cfg.train.learning_rate);
    EXPECT_EQ(back.train.batch_size, cfg.train.batch_size);
    EXPECT_DOUBLE_EQ(back.train.momentum, cfg.train.momentum);
    EXPECT_DOUBLE_EQ(back.train.weight_decay, cfg.train.weight_decay);
    EXPECT_EQ(back.train.epochs, cfg.train.epochs);
    EXPECT_EQ(back.train.checkpoint_every, cfg.train.checkpoint_every);
    EXPECT_EQ(back.loss, cfg.loss);
    EXPECT_DOUBLE_EQ(back.focal_alpha, cfg.focal_alpha);
    EXPECT_DOUBLE_EQ(back.focal_gamma, cfg.focal_gamma);
    EXPECT_EQ(back.resume, cfg.resume);
    EXPECT_EQ(back.split, cfg.split);
    EXPECT_EQ(back.fields, cfg.fields);
    EXPECT_EQ(back.field_height, cfg.field_height);
    EXPECT_EQ(back.field_width, cfg.field_width);
    EXPECT_EQ(back.random_crops, cfg.random_crops);
    EXPECT_EQ(back.rotations, cfg.rotations);
    EXPECT_DOUBLE_EQ(back.angle_min, cfg.angle_min);
    EXPECT_DOUBLE_EQ(back.angle_max, cfg.angle_max);
}

TEST(FrozenConfig, EmptyPathsSurviveTheRoundTrip) {
    TempDir tmp;
    const RunConfig cfg = default_run_config("synth");  // data/out/resume all empty
    const fs::path frozen = tmp.path("config.synth.ini");
    write_frozen_config(cfg, frozen);
    const RunConfig back = load_run_config("synth", frozen, {});
    EXPECT_TRUE(back.data_dir.empty());
    EXPECT_TRUE(back.out_dir.empty());
    EXPECT_TRUE(back.resume.empty());
}

TEST(RunConfigValidate, RejectsOutOfRangeSettings) {
    RunConfig cfg = default_run_config("train");
    cfg.threshold = 300.0;
    EXPECT_THROW(cfg.validate(), ConfigError);

    cfg = default_run_config("train");
    cfg.focal_alpha = 1.5;
    EXPECT_THROW(cfg.validate(), ConfigError);

    cfg = default_run_config("train");
    cfg.focal_gamma = -1.0;
    EXPECT_THROW(cfg.validate(), ConfigError);

    cfg = default_run_config("train");
    cfg.angle_min = 50.0;
    cfg.angle_max = 10.0;
    EXPECT_THROW(cfg.validate(), ConfigError);

    cfg = default_run_config("train");
    cfg.fields = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);

    cfg = default_run_config("train");
    cfg.field_width = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);

    cfg = default_run_config("train");
    cfg.train.learning_rate = 0.0;
    EXPECT_THROW(cfg.validate(), ConfigError);
}
