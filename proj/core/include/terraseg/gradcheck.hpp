#pragma once

#include <algorithm>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "terraseg/rng.hpp"
#include "terraseg/tensor.hpp"

namespace terraseg {

struct GradCheckEntry {
    std::string name;
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_err = 0.0;
};

struct GradCheckReport {
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    bool passed = false;
    GradCheckEntry worst;
    std::size_t elements_checked = 0;
};

/// Compares reverse-mode gradients of a scalar-valued forward pass against
/// central finite differences, in double precision.
///
/// `forward` must rebuild the computation from the given leaf tensors each
/// time it is called (their values are perturbed in place). Relative error per
/// element is |a - n| / max(|a|, |n|, 1e-6). When `max_elements_per_input` is
/// non-zero, at most that many elements of each leaf are probed, chosen
/// deterministically from `seed`.
inline GradCheckReport grad_check(const std::function<Tensor<double>()>& forward,
                                  std::vector<std::pair<std::string, Tensor<double>>> leaves,
                                  double tolerance = 1e-4, double step = 1e-5,
                                  std::size_t max_elements_per_input = 0,
                                  std::uint64_t seed = 0x67726164) {
    if (leaves.empty()) throw UsageError("grad_check: no leaf tensors supplied");
    for (auto& [name, leaf] : leaves) {
        if (!leaf.requires_grad())
            throw UsageError("grad_check: leaf '" + name + "' does not require gradients");
        leaf.zero_grad();
    }
    Tensor<double> loss = forward();
    if (loss.numel() != 1) throw UsageError("grad_check: forward pass must produce a scalar");
    backward(loss);

    std::vector<std::vector<double>> analytic;
    analytic.reserve(leaves.size());
    for (auto& [name, leaf] : leaves) analytic.push_back(leaf.grad());

    GradCheckReport report;
    report.tolerance = tolerance;
    Rng rng(seed);
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        auto& leaf = leaves[li].second;
        auto& vals = leaf.values_mut();
        std::vector<std::size_t> probe(vals.size());
        for (std::size_t i = 0; i < probe.size(); ++i) probe[i] = i;
        if (max_elements_per_input != 0 && probe.size() > max_elements_per_input) {
            rng.shuffle(probe);
            probe.resize(max_elements_per_input);
            std::sort(probe.begin(), probe.end());
        }
        for (std::size_t idx : probe) {
            const double keep = vals[idx];
            double fp, fm;
            {
                NoGradGuard ng;
                vals[idx] = keep + step;
                fp = forward().item();
                vals[idx] = keep - step;
                fm = forward().item();
            }
            vals[idx] = keep;
            const double numeric = (fp - fm) / (2.0 * step);
            const double a = analytic[li][idx];
            const double rel =
                std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
            ++report.elements_checked;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst = {leaves[li].first, idx, a, numeric, rel};
            }
        }
    }
    report.passed = report.max_rel_err <= tolerance;
    return report;
}

}  // namespace terraseg
