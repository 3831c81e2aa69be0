#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "terraseg/errors.hpp"
#include "terraseg/rng.hpp"
#include "terraseg/tensor.hpp"

namespace terraseg {

/// Owns a model's named trainable tensors. Creation order is stable so the
/// optimizer and checkpoint writer always walk parameters deterministically,
/// and every weight draws from an RNG stream derived from (store seed,
/// parameter name) — adding or removing a parameter never shifts the
/// initialization of the others.
template <typename T>
class ParamStore {
public:
    explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}

    /// Uniform init on [-1/sqrt(fan_in), 1/sqrt(fan_in)].
    Tensor<T> weight(const std::string& name, const Shape& shape, std::size_t fan_in) {
        if (fan_in == 0) throw UsageError("ParamStore: zero fan-in for " + name);
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        Rng rng(derive_seed(seed_, hash_name(name)));
        std::vector<T> values(shape_numel(shape));
        for (T& v : values) v = static_cast<T>(rng.uniform(-bound, bound));
        return insert(name, Tensor<T>::from_data(shape, std::move(values)));
    }

    Tensor<T> zeros(const std::string& name, const Shape& shape) {
        return insert(name, Tensor<T>::zeros(shape));
    }

    Tensor<T> ones(const std::string& name, const Shape& shape) {
        return insert(name, Tensor<T>::full(shape, static_cast<T>(1)));
    }

    bool contains(const std::string& name) const { return map_.count(name) != 0; }

    Tensor<T>& at(const std::string& name) {
        const auto it = map_.find(name);
        if (it == map_.end()) throw UsageError("ParamStore: unknown parameter " + name);
        return it->second;
    }
    const Tensor<T>& at(const std::string& name) const {
        const auto it = map_.find(name);
        if (it == map_.end()) throw UsageError("ParamStore: unknown parameter " + name);
        return it->second;
    }

    /// Parameter names in creation order.
    const std::vector<std::string>& names() const { return order_; }
    std::size_t size() const { return order_.size(); }

    std::size_t numel() const {
        std::size_t n = 0;
        for (const auto& name : order_) n += map_.at(name).numel();
        return n;
    }

    void zero_grads() {
        for (const auto& name : order_) map_.at(name).zero_grad();
    }

    std::uint64_t seed() const { return seed_; }

private:
    Tensor<T> insert(const std::string& name, Tensor<T> t) {
        if (contains(name)) throw UsageError("ParamStore: duplicate parameter name " + name);
        t.set_requires_grad(true);
        order_.push_back(name);
        map_.emplace(name, t);
        return t;
    }

    std::uint64_t seed_;
    std::vector<std::string> order_;
    std::unordered_map<std::string, Tensor<T>> map_;
};

}  // namespace terraseg
