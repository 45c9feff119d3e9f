// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The bmae Authors

#pragma once

#include <deque>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "bmae/common.hpp"

namespace bmae {
class FrequencyFilter;
}

namespace bmae::ad {

class Graph;

/// Handle to a node of a Graph.
struct Var {
    Graph* graph = nullptr;
    int id = -1;

    bool valid() const noexcept { return graph != nullptr && id >= 0; }
    const Matrix& value() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
};

/// A reverse-mode tape over dense matrices. One graph is built per sample
/// and discarded after backward(). A graph created with `record = false`
/// evaluates values only and keeps no backward closures.
class Graph {
public:
    using Backward = std::function<void(Graph&, const Matrix& out_grad)>;

    explicit Graph(bool record = true) : record_(record) {}
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    bool recording() const noexcept { return record_; }

    Var constant(Matrix value);
    /// Constant referring to external storage that must outlive the graph.
    Var constant_ref(const Matrix& value);
    /// Trainable leaf bound to parameter slot `param`; the value is referenced,
    /// not copied.
    Var parameter(int param, const Matrix& value);

    const Matrix& value(Var v) const;
    bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

    /// Gradient of the last backward() root with respect to `v` (zero matrix
    /// if nothing reached it).
    Matrix grad(Var v) const;

    /// Adds `g` into the gradient slot of `v` if `v` requires a gradient.
    void accumulate(Var v, const Matrix& g);

    /// Records a node computed from `inputs`. The backward closure is kept
    /// only when recording and at least one input requires a gradient.
    Var make(Matrix value, std::initializer_list<Var> inputs, Backward backward);
    Var make(Matrix value, std::span<const Var> inputs, Backward backward);

    /// Backpropagates from a 1x1 node.
    void backward(Var root);

    /// Calls f(param, grad) for every parameter leaf that received a gradient.
    template <class F>
    void for_each_parameter_grad(F&& f) const {
        for (const auto& n : nodes_)
            if (n.param >= 0 && n.grad.size() != 0)
                f(n.param, n.grad);
    }

    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Matrix value;
        const Matrix* ref = nullptr;
        Matrix grad;
        bool requires_grad = false;
        int param = -1;
        Backward backward;
    };

    Var push(Node node);

    bool record_;
    std::deque<Node> nodes_;
};

// Elementwise and linear algebra.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double s);
/// a * b
Var matmul(Var a, Var b);
/// a * b^T
Var matmul_nt(Var a, Var b);
/// x * w + broadcast row b
Var linear(Var x, Var w, Var b);
Var gelu(Var x);
/// Row-wise layer normalization with per-column gain and bias (1 x n).
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-6);

/// Multi-head scaled dot-product self attention on a packed (n, 3D) qkv
/// matrix. Queries attend only to the first `visible_keys` tokens when it is
/// non-negative.
Var attention(Var qkv, int heads, int visible_keys = -1);

// Structural.
Var slice_rows(Var x, Eigen::Index start, Eigen::Index count);
Var concat_rows(std::span<const Var> parts);
/// Output row r copies row `picks[r].second` of `sources[picks[r].first]`.
Var gather_rows(std::span<const Var> sources, std::vector<std::pair<int, int>> picks);
/// Output (rows, cols) where flat output element j reads flat input element
/// `source[j]`.
Var permute(Var x, Eigen::Index rows, Eigen::Index cols, std::vector<int> source);
Var detach(Var x);

// Frequency-domain operators on (C, S*S) image matrices.
/// Re(ifft2(M(fft2(x)))) per channel.
Var highpass(Var image, const FrequencyFilter& filter);
/// [Re; Im] of M(fft2(x)), shape (2C, S*S).
Var masked_spectrum(Var image, const FrequencyFilter& filter);

// Scalar losses (1x1 outputs).
Var cross_entropy(Var logits, int label);
/// Mean of (pred - target)^2, optionally restricted to elements where
/// weight is 1 (weights are 0/1, same shape as target).
Var mse(Var pred, const Matrix& target, const Matrix* weight = nullptr);
Var l1_mean(Var pred, const Matrix& target);
Var weighted_sum(std::span<const std::pair<Var, double>> terms);

} // namespace bmae::ad
