#pragma once

// Stochastic gradient descent with momentum and decoupled-from-nothing weight
// decay: the regularizer is folded into the gradient before the momentum
// update, and the very first step seeds each momentum buffer with that
// regularized gradient instead of blending with a zero history.

#include <cstddef>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "terraseg/errors.hpp"
#include "terraseg/params.hpp"

namespace terraseg {

struct TrainConfig {
    std::size_t batch_size = 4;
    double learning_rate = 0.001;
    double momentum = 0.9;
    double weight_decay = 0.0001;
    std::size_t epochs = 300;
    std::size_t checkpoint_every = 50;
    std::uint64_t seed = 0;

    void validate() const {
        if (batch_size < 1) throw ConfigError("batch size must be at least 1");
        if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
        if (!(momentum >= 0.0) || !(momentum < 1.0))
            throw ConfigError("momentum must lie in [0, 1)");
        if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
        if (epochs < 1) throw ConfigError("epoch count must be at least 1");
        if (checkpoint_every < 1) throw ConfigError("checkpoint cadence must be at least 1");
    }
};

/// ceil(total / batch): every sample is visited once per epoch, the final
/// batch simply runs short when batch does not divide total.
inline std::size_t iterations_per_epoch(std::size_t total, std::size_t batch) {
    if (total < 1) throw UsageError("iterations_per_epoch: empty dataset");
    if (batch < 1) throw UsageError("iterations_per_epoch: zero batch size");
    return (total + batch - 1) / batch;
}

template <class T>
class SgdMomentum {
public:
    SgdMomentum(ParamStore<T>& params, const TrainConfig& cfg)
        : params_(params), cfg_(checked(cfg)) {}

    /// One update over every parameter in the store. Order per step:
    /// g <- grad + weight_decay * theta; b <- momentum * b + g (first step:
    /// b <- g); theta <- theta - learning_rate * b.
    void step() {
        for (const std::string& name : params_.names())
            if (!params_.at(name).has_grad())
                throw UsageError("sgd step: no gradient for parameter '" + name + "'");
        ++step_count_;
        const T lr = static_cast<T>(cfg_.learning_rate);
        const T mu = static_cast<T>(cfg_.momentum);
        const T wd = static_cast<T>(cfg_.weight_decay);
        for (const std::string& name : params_.names()) {
            auto& param = params_.at(name);
            auto& theta = param.values_mut();
            const auto& grad = param.grad();
            auto& buffer = buffers_[name];
            const bool first = buffer.size() != theta.size();
            if (first) buffer.assign(theta.size(), T(0));
            for (std::size_t i = 0; i < theta.size(); ++i) {
                const T g = grad[i] + wd * theta[i];
                buffer[i] = first ? g : mu * buffer[i] + g;
                theta[i] -= lr * buffer[i];
            }
        }
    }

    std::size_t step_count() const { return step_count_; }
    const TrainConfig& config() const { return cfg_; }

    /// Momentum buffer snapshot for checkpointing; empty until the parameter
    /// has taken a step.
    const std::unordered_map<std::string, std::vector<T>>& buffers() const { return buffers_; }

    /// Restore persisted optimizer state (resume path).
    void restore(std::size_t step_count, std::unordered_map<std::string, std::vector<T>> buffers) {
        for (const auto& [name, buffer] : buffers) {
            if (!params_.contains(name))
                throw UsageError("sgd restore: unknown parameter '" + name + "'");
            if (buffer.size() != params_.at(name).numel())
                throw DimensionError("sgd restore: momentum buffer for '" + name +
                                     "' does not match the parameter extent");
        }
        step_count_ = step_count;
        buffers_ = std::move(buffers);
    }

private:
    // The optimizer itself also accepts a zero rate, which turns every step
    // into an exact no-op; full configs are vetted by TrainConfig::validate()
    // at the training-run boundary where a zero rate makes no sense.
    static TrainConfig checked(TrainConfig cfg) {
        if (!(cfg.learning_rate >= 0.0)) throw ConfigError("learning rate must not be negative");
        if (!(cfg.momentum >= 0.0) || !(cfg.momentum < 1.0))
            throw ConfigError("momentum must lie in [0, 1)");
        if (!(cfg.weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
        return cfg;
    }

    ParamStore<T>& params_;
    TrainConfig cfg_;
    std::unordered_map<std::string, std::vector<T>> buffers_;
    std::size_t step_count_ = 0;
};

}  // namespace terraseg
