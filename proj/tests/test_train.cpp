#include <gtest/gtest.h>
#include <unistd.h>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "terraseg/errors.hpp"
#include "terraseg/ops.hpp"
#include "terraseg/rng.hpp"
#include "terraseg/train.hpp"

using namespace terraseg;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        dir_ = fs::temp_directory_path() /
               ("terraseg-train-" + std::to_string(::getpid()) + "-" +
                std::to_string(counter.fetch_add(1)));
        fs::create_directories(dir_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(dir_, ec);
    }
    const fs::path& root() const { return dir_; }
    fs::path sub(const std::string& name) const {
        fs::create_directories(dir_ / name);
        return dir_ / name;
    }

private:
    fs::path dir_;
};

/// Per-pixel linear probe: two input channels, one logit. Small enough that a
/// whole fit() run takes milliseconds, yet it exercises the identical loop.
struct ToyModel {
    ParamStore<float> params;
    Tensor<float> weight;
    Tensor<float> bias;

    explicit ToyModel(std::uint64_t seed)
        : params(seed),
          weight(params.weight("toy.w", {2, 1}, 2)),
          bias(params.zeros("toy.b", {1})) {}

    Tensor<float> forward_logits(const Tensor<float>& x) const {
        const std::size_t h = x.dim(1), w = x.dim(2);
        auto seq = ops::transpose(ops::reshape(x, {x.dim(0), h * w}), {1, 0});
        auto out = ops::add_bias_rows(ops::matmul(seq, weight), bias);
        return ops::reshape(ops::transpose(out, {1, 0}), {1, h, w});
    }

    Tensor<float> forward(const Tensor<float>& x) const {
        return ops::sigmoid(forward_logits(x));
    }
};

/// Targets follow the sign of channel 0, so the toy model can memorize them.
std::vector<Sample> separable_samples(std::size_t count, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Sample> samples;
    for (std::size_t s = 0; s < count; ++s) {
        std::vector<float> x(2 * 16), y(16);
        for (std::size_t p = 0; p < 16; ++p) {
            x[p] = static_cast<float>(rng.uniform(-1.0, 1.0));
            x[16 + p] = static_cast<float>(rng.uniform(-1.0, 1.0));
            y[p] = x[p] > 0.0f ? 1.0f : 0.0f;
        }
        samples.push_back(Sample{"s" + std::to_string(s),
                                 Tensor<float>::from_data({2, 4, 4}, std::move(x)),
                                 Tensor<float>::from_data({1, 4, 4}, std::move(y))});
    }
    return samples;
}

FitSpec quick_spec(std::size_t epochs, std::uint64_t seed, const fs::path& out = {}) {
    FitSpec spec;
    spec.train.batch_size = 2;
    spec.train.learning_rate = 0.5;
    spec.train.epochs = epochs;
    spec.train.checkpoint_every = 3;
    spec.train.seed = seed;
    spec.out_dir = out;
    return spec;
}

std::string slurp(const fs::path& path) {
    std::ifstream file(path, std::ios::binary);
    std::ostringstream out;
    out << file.rdbuf();
    return out.str();
}

}  // namespace

TEST(Fit, CurveCheckpointsAndCsvLayout) {
    TempDir tmp;
    ToyModel model(1);
    const auto train_set = separable_samples(5, 10);
    const auto val_set = separable_samples(2, 20);
    const auto result = fit(model, train_set, val_set, quick_spec(7, 3, tmp.root()));

    ASSERT_EQ(result.curve.size(), 7u);
    for (std::size_t e = 0; e < 7; ++e) EXPECT_EQ(result.curve[e].epoch, e + 1);

    // Cadence 3 over 7 epochs: checkpoints at 3, 6, and the final epoch 7.
    ASSERT_EQ(result.checkpoints.size(), 3u);
    EXPECT_EQ(result.checkpoints[0].epoch, 3u);
    EXPECT_EQ(result.checkpoints[1].epoch, 6u);
    EXPECT_EQ(result.checkpoints[2].epoch, 7u);
    for (const auto& c : result.checkpoints) EXPECT_TRUE(fs::exists(c.path)) << c.path;
    EXPECT_EQ(result.checkpoints[0].path.filename().string(), "checkpoint-00003.sseg");

    std::ifstream csv(tmp.root() / "losses.csv");
    ASSERT_TRUE(csv.is_open());
    std::string line;
    std::getline(csv, line);
    EXPECT_EQ(line, "epoch,train_loss,val_loss");
    std::size_t rows = 0;
    while (std::getline(csv, line)) {
        std::size_t epoch;
        double train_loss, val_loss;
        ASSERT_EQ(std::sscanf(line.c_str(), "%zu,%lf,%lf", &epoch, &train_loss, &val_loss), 3)
            << line;
        EXPECT_EQ(epoch, ++rows);
        EXPECT_TRUE(std::isfinite(train_loss));
        EXPECT_TRUE(std::isfinite(val_loss));
    }
    EXPECT_EQ(rows, 7u);
}

TEST(Fit, LossShrinksWhileMemorizing) {
    ToyModel model(1);
    const auto train_set = separable_samples(4, 11);
    const auto result = fit(model, train_set, train_set, quick_spec(40, 5));
    EXPECT_LT(result.curve.back().train_loss, result.curve[9].train_loss);
    EXPECT_LT(result.curve.back().train_loss, 0.2);
    EXPECT_GT(result.curve.front().train_loss, result.curve.back().train_loss);
}

TEST(Fit, SameSeedTwiceGivesByteIdenticalCurves) {
    TempDir tmp;
    const auto train_set = separable_samples(5, 12);
    const auto val_set = separable_samples(2, 13);
    ToyModel a(9), b(9);
    fit(a, train_set, val_set, quick_spec(6, 21, tmp.sub("a")));
    fit(b, train_set, val_set, quick_spec(6, 21, tmp.sub("b")));
    const std::string csv_a = slurp(tmp.root() / "a" / "losses.csv");
    EXPECT_FALSE(csv_a.empty());
    EXPECT_EQ(csv_a, slurp(tmp.root() / "b" / "losses.csv"));

    ToyModel c(9);
    fit(c, train_set, val_set, quick_spec(6, 22, tmp.sub("c")));
    EXPECT_NE(csv_a, slurp(tmp.root() / "c" / "losses.csv"));  // the seed matters
}

TEST(Fit, ResumeMatchesTheUninterruptedRunExactly) {
    TempDir tmp;
    const auto train_set = separable_samples(5, 30);
    const auto val_set = separable_samples(2, 31);

    ToyModel straight(4);
    fit(straight, train_set, val_set, quick_spec(6, 77, tmp.sub("full")));

    ToyModel interrupted(4);
    fit(interrupted, train_set, val_set, quick_spec(3, 77, tmp.sub("resumed")));
    ToyModel revived(999);  // seed irrelevant: the checkpoint overwrites everything
    FitSpec tail = quick_spec(6, 77, tmp.sub("resumed"));
    tail.resume_from = tmp.root() / "resumed" / "checkpoint-00003.sseg";
    const auto tail_result = fit(revived, train_set, val_set, tail);

    EXPECT_EQ(tail_result.start_epoch, 3u);
    ASSERT_EQ(tail_result.curve.size(), 3u);
    EXPECT_EQ(tail_result.curve.front().epoch, 4u);

    // Same losses, same curve file, bitwise-equal weights and checkpoints.
    EXPECT_EQ(slurp(tmp.root() / "full" / "losses.csv"),
              slurp(tmp.root() / "resumed" / "losses.csv"));
    for (const std::string& name : straight.params.names())
        EXPECT_EQ(straight.params.at(name).values(), revived.params.at(name).values()) << name;
    EXPECT_EQ(slurp(tmp.root() / "full" / "checkpoint-00006.sseg"),
              slurp(tmp.root() / "resumed" / "checkpoint-00006.sseg"));
}

TEST(Fit, NonFiniteLossNamesEpochAndIteration) {
    ToyModel model(1);
    auto train_set = separable_samples(3, 40);
    train_set[0].input.values_mut()[5] = std::numeric_limits<float>::quiet_NaN();
    try {
        fit(model, train_set, {}, quick_spec(2, 1));
        FAIL() << "expected DomainError";
    } catch (const DomainError& e) {
        const std::string what = e.what();
        EXPECT_NE(what.find("epoch 1"), std::string::npos) << what;
        EXPECT_NE(what.find("iteration"), std::string::npos) << what;
    }
}

TEST(Fit, RejectsEmptyTrainingSetAndBadConfig) {
    ToyModel model(1);
    EXPECT_THROW(fit(model, {}, {}, quick_spec(2, 1)), UsageError);
    FitSpec bad = quick_spec(2, 1);
    bad.train.learning_rate = 0.0;
    EXPECT_THROW(fit(model, separable_samples(2, 2), {}, bad), ConfigError);
}

TEST(Fit, ValidationRunsFrozenAndMatchesManualBce) {
    // Zero weights make every logit zero, so every loss is exactly ln 2.
    ToyModel model(1);
    model.weight.values_mut().assign(2, 0.0f);
    FitSpec spec = quick_spec(1, 1);
    const auto samples = separable_samples(3, 50);
    EXPECT_NEAR(mean_loss(model, samples, spec), std::log(2.0), 1e-6);
    // And fresh-model parameters were untouched by the measurement.
    EXPECT_EQ(model.weight.values(), (std::vector<float>{0.0f, 0.0f}));
}

TEST(EvaluateModel, AveragesPerSampleScores) {
    // Zero weights give probability 0.5 everywhere; scaled to the 8-bit
    // domain that's 127.5, below the 190 cutoff, so every prediction is
    // background.
    ToyModel model(1);
    model.weight.values_mut().assign(2, 0.0f);

    std::vector<Sample> samples = separable_samples(2, 60);
    samples[1].target.values_mut().assign(16, 0.0f);  // second sample truly empty
    std::size_t fg = 0;
    for (float v : samples[0].target.values()) fg += v > 0.5f;
    ASSERT_GT(fg, 0u);

    const SegmentationMetrics m = evaluate_model(model, samples);
    EXPECT_EQ(m.n_samples, 2u);
    // Sample 0 misses all its foreground; sample 1 is a perfect empty-empty
    // match, which scores 1 across the board.
    EXPECT_NEAR(m.mean_accuracy, ((16.0 - static_cast<double>(fg)) / 16.0 + 1.0) / 2.0, 1e-12);
    EXPECT_NEAR(m.mean_dice, 0.5, 1e-12);
    EXPECT_NEAR(m.mean_iou, 0.5, 1e-12);

    EXPECT_THROW(evaluate_model(model, {}), UsageError);
}

TEST(SelectBest, ArgmaxWithEarliestTieBreak) {
    const std::vector<ScoredCheckpoint> series{
        {"a.sseg", 50, 0.1}, {"b.sseg", 100, 0.4}, {"c.sseg", 150, 0.3}};
    EXPECT_EQ(select_best(series).epoch, 100u);

    const std::vector<ScoredCheckpoint> tie{{"a.sseg", 50, 0.4}, {"b.sseg", 100, 0.4}};
    EXPECT_EQ(select_best(tie).epoch, 50u);

    const std::vector<ScoredCheckpoint> one{{"only.sseg", 7, 0.0}};
    EXPECT_EQ(select_best(one).path, "only.sseg");

    EXPECT_THROW(select_best({}), UsageError);
}
