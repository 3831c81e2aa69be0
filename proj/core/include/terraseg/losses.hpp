#pragma once

// Loss evaluation on probability inputs. The training loop differentiates the
// logits-space losses in ops.hpp; these double-precision helpers serve code
// paths that start from probabilities (reports, sanity checks) where the raw
// cross-entropy would blow up at saturated predictions. Probabilities are
// clamped to [eps, 1 - eps] first.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "terraseg/errors.hpp"

namespace terraseg {

inline constexpr double kProbClamp = 1e-7;

namespace loss_detail {

inline void check_pair(const std::vector<double>& probs, const std::vector<double>& targets) {
    if (probs.empty()) throw DimensionError("loss: empty input");
    if (probs.size() != targets.size())
        throw DimensionError("loss: prediction count " + std::to_string(probs.size()) +
                             " does not match target count " + std::to_string(targets.size()));
}

inline double clamp_prob(double p) {
    return std::clamp(p, kProbClamp, 1.0 - kProbClamp);
}

}  // namespace loss_detail

/// Mean binary cross-entropy -(1/Q) * sum(y*log(m) + (1-y)*log(1-m)) with
/// inputs clamped away from {0,1}.
inline double bce_from_probs(const std::vector<double>& probs,
                             const std::vector<double>& targets) {
    loss_detail::check_pair(probs, targets);
    double total = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double m = loss_detail::clamp_prob(probs[i]);
        total -= targets[i] * std::log(m) + (1.0 - targets[i]) * std::log1p(-m);
    }
    return total / static_cast<double>(probs.size());
}

/// Mean focal loss alpha_t * (1 - p_t)^gamma * (-log p_t) on clamped
/// probabilities, with alpha_t = alpha for positives and 1 - alpha otherwise.
inline double focal_from_probs(const std::vector<double>& probs,
                               const std::vector<double>& targets, double alpha = 0.25,
                               double gamma = 2.0) {
    loss_detail::check_pair(probs, targets);
    if (!(alpha > 0.0) || !(alpha < 1.0))
        throw ConfigError("focal loss alpha must lie in (0, 1)");
    if (!(gamma >= 0.0)) throw ConfigError("focal loss gamma must be non-negative");
    double total = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double m = loss_detail::clamp_prob(probs[i]);
        const double pt = targets[i] > 0.5 ? m : 1.0 - m;
        const double at = targets[i] > 0.5 ? alpha : 1.0 - alpha;
        total += at * std::pow(1.0 - pt, gamma) * (-std::log(pt));
    }
    return total / static_cast<double>(probs.size());
}

}  // namespace terraseg
