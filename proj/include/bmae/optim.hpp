// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The bmae Authors

#pragma once

#include <cstddef>
#include <vector>

#include "bmae/model.hpp"

namespace bmae {

/// base_lr * 0.5 * (1 + cos(pi * step / total_steps)).
double cosine_lr(double base_lr, std::size_t step, std::size_t total_steps);

/// Per-slot gradient accumulator shaped like a ParameterSet.
class GradientBuffer {
public:
    explicit GradientBuffer(const ParameterSet& params);
    void add(int slot, const Matrix& g, double weight = 1.0);
    /// Pulls every parameter gradient out of a graph after backward().
    void add_from(const ad::Graph& graph, double weight = 1.0);
    const Matrix& operator[](int slot) const { return grads_[slot]; }
    int size() const noexcept { return static_cast<int>(grads_.size()); }
    double max_abs() const;

private:
    std::vector<Matrix> grads_;
};

/// Adam with bias correction and no weight decay.
class Adam {
public:
    struct Options {
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
    };

    Adam() = default;
    explicit Adam(Options options) : options_(options) {}

    /// Clears moments and the step counter.
    void reset();
    /// Frozen slots (if given) are left untouched.
    void step(ParameterSet& params, const GradientBuffer& grads, double lr, const std::vector<bool>* frozen = nullptr);
    std::size_t steps() const noexcept { return t_; }

private:
    Options options_{};
    std::size_t t_ = 0;
    std::vector<Matrix> m_, v_;
};

} // namespace bmae
