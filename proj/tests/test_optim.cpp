#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "terraseg/errors.hpp"
#include "terraseg/losses.hpp"
#include "terraseg/ops.hpp"
#include "terraseg/optim.hpp"
#include "terraseg/params.hpp"
#include "terraseg/rng.hpp"

using namespace terraseg;

// ---- probability-space losses ------------------------------------------------------

TEST(BceProbs, PerfectPredictionIsNearZero) {
    const std::vector<double> y{0, 1, 1, 0, 1};
    EXPECT_LE(bce_from_probs(y, y), 1e-6);
}

TEST(BceProbs, UniformPredictionCostsLogTwo) {
    const std::vector<double> m(8, 0.5);
    for (const std::vector<double>& y :
         {std::vector<double>(8, 0.0), std::vector<double>(8, 1.0),
          std::vector<double>{0, 1, 0, 1, 0, 1, 0, 1}}) {
        EXPECT_NEAR(bce_from_probs(m, y), std::log(2.0), 1e-9);
    }
}

TEST(BceProbs, SinglePixelWorkedValue) {
    EXPECT_NEAR(bce_from_probs({0.25}, {1.0}), 1.386294, 1e-6);
}

TEST(BceProbs, ClampsSaturatedInputs) {
    const double at_one = bce_from_probs({1.0}, {0.0});
    EXPECT_TRUE(std::isfinite(at_one));
    EXPECT_NEAR(at_one, -std::log(kProbClamp), 1e-3);
    EXPECT_TRUE(std::isfinite(bce_from_probs({0.0}, {1.0})));
}

TEST(BceProbs, RejectsMismatchedAndEmptyInputs) {
    EXPECT_THROW(bce_from_probs({0.5, 0.5}, {1.0}), DimensionError);
    EXPECT_THROW(bce_from_probs({}, {}), DimensionError);
}

TEST(FocalProbs, GammaZeroHalvesBceAtAlphaHalf) {
    Rng rng(77);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> m(6), y(6);
        for (std::size_t i = 0; i < m.size(); ++i) {
            m[i] = rng.uniform(0.02, 0.98);
            y[i] = rng.below(2) ? 1.0 : 0.0;
        }
        ASSERT_NEAR(focal_from_probs(m, y, 0.5, 0.0), 0.5 * bce_from_probs(m, y), 1e-9);
    }
}

TEST(FocalProbs, EasyPositiveWorkedValue) {
    // alpha 0.25, gamma 2, confident correct positive: 0.25 * 0.1^2 * -ln(0.9)
    EXPECT_NEAR(focal_from_probs({0.9}, {1.0}, 0.25, 2.0), 2.634e-4, 2e-6);
}

TEST(FocalProbs, RejectsBadParameters) {
    EXPECT_THROW(focal_from_probs({0.5}, {1.0}, 0.0, 2.0), ConfigError);
    EXPECT_THROW(focal_from_probs({0.5}, {1.0}, 1.0, 2.0), ConfigError);
    EXPECT_THROW(focal_from_probs({0.5}, {1.0}, 0.25, -0.5), ConfigError);
}

TEST(FocalProbs, DownWeightsEasyPixelsHarderThanBce) {
    // The focal reweighting must shrink an easy pixel's contribution far more
    // than a hard pixel's.
    const double easy = focal_from_probs({0.95}, {1.0}, 0.5, 2.0) /
                        (0.5 * bce_from_probs({0.95}, {1.0}));
    const double hard = focal_from_probs({0.10}, {1.0}, 0.5, 2.0) /
                        (0.5 * bce_from_probs({0.10}, {1.0}));
    EXPECT_LT(easy, 0.01);
    EXPECT_GT(hard, 0.5);
}

// ---- config + epoch arithmetic -----------------------------------------------------

TEST(TrainConfigCheck, DefaultsAreValid) {
    const TrainConfig cfg;
    EXPECT_NO_THROW(cfg.validate());
    EXPECT_EQ(cfg.batch_size, 4u);
    EXPECT_DOUBLE_EQ(cfg.learning_rate, 0.001);
    EXPECT_DOUBLE_EQ(cfg.momentum, 0.9);
    EXPECT_DOUBLE_EQ(cfg.weight_decay, 0.0001);
    EXPECT_EQ(cfg.checkpoint_every, 50u);
}

TEST(TrainConfigCheck, RejectsOutOfRangeFields) {
    TrainConfig cfg;
    cfg.batch_size = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = TrainConfig{};
    cfg.learning_rate = 0.0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = TrainConfig{};
    cfg.momentum = 1.0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = TrainConfig{};
    cfg.momentum = -0.1;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = TrainConfig{};
    cfg.weight_decay = -1e-9;
    EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(EpochArithmetic, CeilingRuleWithPartialFinalBatch) {
    EXPECT_EQ(iterations_per_epoch(8, 4), 2u);
    EXPECT_EQ(iterations_per_epoch(1, 4), 1u);
    EXPECT_EQ(iterations_per_epoch(1455, 4), 364u);
    EXPECT_EQ(1455u - 363u * 4u, 3u);  // the documented short final batch
    EXPECT_THROW(iterations_per_epoch(0, 4), UsageError);
    EXPECT_THROW(iterations_per_epoch(4, 0), UsageError);
}

// ---- the optimizer itself ----------------------------------------------------------

namespace {

ParamStore<double> single_param_store(double theta) {
    ParamStore<double> ps(0);
    auto p = ps.zeros("w", {1});
    p.values_mut()[0] = theta;
    return ps;
}

void set_grad(Tensor<double>& p, double g) {
    p.zero_grad();
    auto loss = ops::scale(p, g);
    backward(ops::sum(loss));
}

TrainConfig plain_sgd(double lr, double mu = 0.0, double wd = 0.0) {
    TrainConfig cfg;
    cfg.learning_rate = lr;
    cfg.momentum = mu;
    cfg.weight_decay = wd;
    return cfg;
}

}  // namespace

TEST(Sgd, PlainStepWithoutMomentumOrDecay) {
    auto ps = single_param_store(1.0);
    SgdMomentum<double> opt(ps, plain_sgd(0.1));
    auto p = ps.at("w");
    set_grad(p, 0.5);
    opt.step();
    EXPECT_DOUBLE_EQ(p.values()[0], 0.95);
    EXPECT_EQ(opt.step_count(), 1u);
}

TEST(Sgd, TwoStepMomentumHandTrace) {
    auto ps = single_param_store(3.0);
    SgdMomentum<double> opt(ps, plain_sgd(0.1, 0.9));
    auto p = ps.at("w");
    set_grad(p, 1.0);
    opt.step();  // buffer seeded with the raw gradient, theta -= 0.1
    set_grad(p, 1.0);
    opt.step();  // buffer = 0.9*1 + 1 = 1.9, theta -= 0.19
    EXPECT_NEAR(p.values()[0], 3.0 - 0.29, 1e-12);
}

TEST(Sgd, WeightDecayActsWithoutAnyGradient) {
    auto ps = single_param_store(2.0);
    SgdMomentum<double> opt(ps, plain_sgd(0.05, 0.0, 0.1));
    auto p = ps.at("w");
    set_grad(p, 0.0);
    opt.step();  // effective gradient 0.1 * 2 = 0.2
    EXPECT_NEAR(p.values()[0], 2.0 - 0.05 * 0.2, 1e-15);
}

TEST(Sgd, MissingGradientIsAUsageError) {
    ParamStore<double> ps(0);
    ps.zeros("a", {2});
    ps.zeros("b", {2});
    SgdMomentum<double> opt(ps, plain_sgd(0.1));
    ps.at("a").zero_grad();  // "b" left unpopulated
    EXPECT_THROW(opt.step(), UsageError);
    // Nothing moved: the check runs before any update.
    EXPECT_EQ(ps.at("a").values(), (std::vector<double>{0, 0}));
}

TEST(Sgd, ZeroRateLeavesParametersBitIdentical) {
    ParamStore<double> ps(3);
    ps.weight("w", {4, 4}, 4);
    const std::vector<double> before = ps.at("w").values();
    TrainConfig cfg = plain_sgd(0.0, 0.9, 0.0001);
    SgdMomentum<double> opt(ps, cfg);
    // A full epoch of updates at rate zero.
    for (std::size_t it = 0; it < iterations_per_epoch(7, 2); ++it) {
        auto p = ps.at("w");
        set_grad(p, 0.25);
        opt.step();
    }
    EXPECT_EQ(ps.at("w").values(), before);
}

TEST(Sgd, RestoreResumesTheMomentumHistory) {
    auto run = [](bool split) {
        auto ps = single_param_store(1.0);
        SgdMomentum<double> opt(ps, plain_sgd(0.1, 0.9));
        auto p = ps.at("w");
        set_grad(p, 1.0);
        opt.step();
        if (split) {
            const auto buffers = opt.buffers();
            const std::size_t steps = opt.step_count();
            SgdMomentum<double> fresh(ps, plain_sgd(0.1, 0.9));
            fresh.restore(steps, buffers);
            set_grad(p, 1.0);
            fresh.step();
        } else {
            set_grad(p, 1.0);
            opt.step();
        }
        return p.values()[0];
    };
    EXPECT_DOUBLE_EQ(run(true), run(false));
}

TEST(Sgd, RestoreRejectsUnknownOrMisshapenBuffers) {
    ParamStore<double> ps(0);
    ps.zeros("w", {2});
    SgdMomentum<double> opt(ps, plain_sgd(0.1, 0.9));
    EXPECT_THROW(opt.restore(1, {{"ghost", {0.0, 0.0}}}), UsageError);
    EXPECT_THROW(opt.restore(1, {{"w", {0.0}}}), DimensionError);
}

TEST(Sgd, MatchesAStepByStepScalarSimulation) {
    // Randomized agreement against an independent trace of the update rule.
    Rng rng(2024);
    ParamStore<double> ps(1);
    ps.weight("w", {3}, 3);
    TrainConfig cfg = plain_sgd(0.05, 0.8, 0.01);
    SgdMomentum<double> opt(ps, cfg);

    std::vector<double> theta = ps.at("w").values();
    std::vector<double> buffer(3, 0.0);
    for (int stepi = 0; stepi < 25; ++stepi) {
        const double g = rng.uniform(-1.0, 1.0);
        auto p = ps.at("w");
        set_grad(p, g);
        opt.step();
        for (std::size_t i = 0; i < 3; ++i) {
            const double reg = g + 0.01 * theta[i];
            buffer[i] = stepi == 0 ? reg : 0.8 * buffer[i] + reg;
            theta[i] -= 0.05 * buffer[i];
        }
    }
    for (std::size_t i = 0; i < 3; ++i)
        ASSERT_NEAR(ps.at("w").values()[i], theta[i], 1e-12) << "lane " << i;
}
