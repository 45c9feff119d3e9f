// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The bmae Authors

#include "bmae/optim.hpp"

#include <cmath>
#include <numbers>

namespace bmae {

double cosine_lr(double base_lr, std::size_t step, std::size_t total_steps) {
    if (total_steps == 0)
        return base_lr;
    const double progress = static_cast<double>(step) / static_cast<double>(total_steps);
    return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

GradientBuffer::GradientBuffer(const ParameterSet& params) : grads_(params.size()) {
    for (int i = 0; i < params.size(); ++i)
        grads_[i] = Matrix::Zero(params.value(i).rows(), params.value(i).cols());
}

void GradientBuffer::add(int slot, const Matrix& g, double weight) {
    if (g.rows() != grads_[slot].rows() || g.cols() != grads_[slot].cols())
        throw DimensionError("gradient shape does not match parameter");
    grads_[slot] += weight * g;
}

void GradientBuffer::add_from(const ad::Graph& graph, double weight) {
    graph.for_each_parameter_grad([&](int slot, const Matrix& g) { add(slot, g, weight); });
}

double GradientBuffer::max_abs() const {
    double m = 0.0;
    for (const auto& g : grads_)
        if (g.size() != 0)
            m = std::max(m, g.cwiseAbs().maxCoeff());
    return m;
}

void Adam::reset() {
    t_ = 0;
    m_.clear();
    v_.clear();
}

void Adam::step(ParameterSet& params, const GradientBuffer& grads, double lr, const std::vector<bool>* frozen) {
    if (grads.size() != params.size())
        throw DimensionError("Adam: gradient buffer does not match parameters");
    if (m_.size() != static_cast<std::size_t>(params.size())) {
        m_.assign(params.size(), Matrix());
        v_.assign(params.size(), Matrix());
    }
    ++t_;
    const double b1 = options_.beta1;
    const double b2 = options_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (int i = 0; i < params.size(); ++i) {
        if (frozen && (*frozen)[i])
            continue;
        Matrix& w = params.value(i);
        const Matrix& g = grads[i];
        if (m_[i].rows() != w.rows() || m_[i].cols() != w.cols()) {
            m_[i] = Matrix::Zero(w.rows(), w.cols());
            v_[i] = Matrix::Zero(w.rows(), w.cols());
        }
        m_[i] = b1 * m_[i] + (1.0 - b1) * g;
        v_[i] = b2 * v_[i] + (1.0 - b2) * g.cwiseAbs2();
        w.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + options_.eps);
    }
}

} // namespace bmae
