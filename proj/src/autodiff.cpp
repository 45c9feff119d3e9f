// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The bmae Authors

#include "bmae/autodiff.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <numbers>

#include "bmae/frequency.hpp"

namespace bmae::ad {

const Matrix& Var::value() const { return graph->value(*this); }

Var Graph::push(Node node) {
    nodes_.push_back(std::move(node));
    return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Graph::constant(Matrix value) {
    Node n;
    n.value = std::move(value);
    return push(std::move(n));
}

Var Graph::constant_ref(const Matrix& value) {
    Node n;
    n.ref = &value;
    return push(std::move(n));
}

Var Graph::parameter(int param, const Matrix& value) {
    Node n;
    n.ref = &value;
    n.requires_grad = record_;
    n.param = param;
    return push(std::move(n));
}

const Matrix& Graph::value(Var v) const {
    const Node& n = nodes_[v.id];
    return n.ref ? *n.ref : n.value;
}

Matrix Graph::grad(Var v) const {
    const Node& n = nodes_[v.id];
    if (n.grad.size() == 0)
        return Matrix::Zero(value(v).rows(), value(v).cols());
    return n.grad;
}

void Graph::accumulate(Var v, const Matrix& g) {
    Node& n = nodes_[v.id];
    if (!n.requires_grad)
        return;
    if (n.grad.size() == 0)
        n.grad = g;
    else
        n.grad += g;
}

Var Graph::make(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
    return make(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
}

Var Graph::make(Matrix value, std::span<const Var> inputs, Backward backward) {
    Node n;
    n.value = std::move(value);
    if (record_) {
        for (const Var& in : inputs)
            if (nodes_[in.id].requires_grad) {
                n.requires_grad = true;
                break;
            }
        if (n.requires_grad)
            n.backward = std::move(backward);
    }
    return push(std::move(n));
}

void Graph::backward(Var root) {
    if (value(root).size() != 1)
        throw DimensionError("backward() needs a scalar root");
    if (!nodes_[root.id].requires_grad)
        return;
    nodes_[root.id].grad = Matrix::Ones(1, 1);
    for (int i = root.id; i >= 0; --i) {
        Node& n = nodes_[i];
        if (n.backward && n.grad.size() != 0)
            n.backward(*this, n.grad);
    }
}

namespace {

void require_same_shape(Var a, Var b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw DimensionError(std::string(op) + ": shape mismatch");
}

} // namespace

Var add(Var a, Var b) {
    require_same_shape(a, b, "add");
    Graph& g = *a.graph;
    return g.make(a.value() + b.value(), {a, b}, [a, b](Graph& g, const Matrix& G) {
        g.accumulate(a, G);
        g.accumulate(b, G);
    });
}

Var sub(Var a, Var b) {
    require_same_shape(a, b, "sub");
    Graph& g = *a.graph;
    return g.make(a.value() - b.value(), {a, b}, [a, b](Graph& g, const Matrix& G) {
        g.accumulate(a, G);
        g.accumulate(b, -G);
    });
}

Var scale(Var a, double s) {
    Graph& g = *a.graph;
    return g.make(a.value() * s, {a}, [a, s](Graph& g, const Matrix& G) { g.accumulate(a, G * s); });
}

Var matmul(Var a, Var b) {
    if (a.cols() != b.rows())
        throw DimensionError("matmul: inner dimensions differ");
    Graph& g = *a.graph;
    return g.make(a.value() * b.value(), {a, b}, [a, b](Graph& g, const Matrix& G) {
        if (g.requires_grad(a))
            g.accumulate(a, G * g.value(b).transpose());
        if (g.requires_grad(b))
            g.accumulate(b, g.value(a).transpose() * G);
    });
}

Var matmul_nt(Var a, Var b) {
    if (a.cols() != b.cols())
        throw DimensionError("matmul_nt: inner dimensions differ");
    Graph& g = *a.graph;
    return g.make(a.value() * b.value().transpose(), {a, b}, [a, b](Graph& g, const Matrix& G) {
        if (g.requires_grad(a))
            g.accumulate(a, G * g.value(b));
        if (g.requires_grad(b))
            g.accumulate(b, G.transpose() * g.value(a));
    });
}

Var linear(Var x, Var w, Var b) {
    if (x.cols() != w.rows() || b.rows() != 1 || b.cols() != w.cols())
        throw DimensionError("linear: shape mismatch");
    Graph& g = *x.graph;
    Matrix out = x.value() * w.value();
    out.rowwise() += b.value().row(0);
    return g.make(std::move(out), {x, w, b}, [x, w, b](Graph& g, const Matrix& G) {
        if (g.requires_grad(x))
            g.accumulate(x, G * g.value(w).transpose());
        if (g.requires_grad(w))
            g.accumulate(w, g.value(x).transpose() * G);
        if (g.requires_grad(b))
            g.accumulate(b, G.colwise().sum());
    });
}

Var gelu(Var x) {
    Graph& g = *x.graph;
    const Matrix& v = x.value();
    Matrix out(v.rows(), v.cols());
    const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        const double t = v.data()[i];
        out.data()[i] = 0.5 * t * (1.0 + std::erf(t * inv_sqrt2));
    }
    return g.make(std::move(out), {x}, [x, inv_sqrt2](Graph& g, const Matrix& G) {
        const Matrix& v = g.value(x);
        Matrix dx(v.rows(), v.cols());
        const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            const double t = v.data()[i];
            const double cdf = 0.5 * (1.0 + std::erf(t * inv_sqrt2));
            const double pdf = inv_sqrt_2pi * std::exp(-0.5 * t * t);
            dx.data()[i] = G.data()[i] * (cdf + t * pdf);
        }
        g.accumulate(x, dx);
    });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
    const Matrix& v = x.value();
    const Eigen::Index n = v.cols();
    if (gain.rows() != 1 || gain.cols() != n || bias.rows() != 1 || bias.cols() != n)
        throw DimensionError("layer_norm: gain/bias shape mismatch");
    Graph& g = *x.graph;
    auto normalized = std::make_shared<Matrix>(v.rows(), n);
    auto inv_std = std::make_shared<Eigen::VectorXd>(v.rows());
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
        const double mean = v.row(r).mean();
        const double var = (v.row(r).array() - mean).square().mean();
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)(r) = is;
        normalized->row(r) = (v.row(r).array() - mean) * is;
    }
    Matrix out = normalized->array().rowwise() * gain.value().row(0).array();
    out.rowwise() += bias.value().row(0);
    return g.make(std::move(out), {x, gain, bias},
                  [x, gain, bias, normalized, inv_std](Graph& g, const Matrix& G) {
                      const Matrix& xh = *normalized;
                      if (g.requires_grad(gain))
                          g.accumulate(gain, (G.array() * xh.array()).colwise().sum().matrix());
                      if (g.requires_grad(bias))
                          g.accumulate(bias, G.colwise().sum());
                      if (g.requires_grad(x)) {
                          const Matrix gxh = G.array().rowwise() * g.value(gain).row(0).array();
                          Matrix dx(xh.rows(), xh.cols());
                          for (Eigen::Index r = 0; r < xh.rows(); ++r) {
                              const double m1 = gxh.row(r).mean();
                              const double m2 = (gxh.row(r).array() * xh.row(r).array()).mean();
                              dx.row(r) = (*inv_std)(r) *
                                          (gxh.row(r).array() - m1 - xh.row(r).array() * m2).matrix();
                          }
                          g.accumulate(x, dx);
                      }
                  });
}

Var attention(Var qkv, int heads, int visible_keys) {
    const Matrix& v = qkv.value();
    if (heads <= 0 || v.cols() % (3 * heads) != 0)
        throw DimensionError("attention: packed width must be 3 * heads * head_dim");
    const Eigen::Index n = v.rows();
    const Eigen::Index dim = v.cols() / 3;
    const Eigen::Index hd = dim / heads;
    const double s = 1.0 / std::sqrt(static_cast<double>(hd));
    const Eigen::Index keys = visible_keys < 0 ? n : std::min<Eigen::Index>(visible_keys, n);
    if (keys <= 0)
        throw DimensionError("attention: no visible keys");

    auto probs = std::make_shared<std::vector<Matrix>>(heads);
    Matrix out(n, dim);
    for (int h = 0; h < heads; ++h) {
        const auto q = v.block(0, h * hd, n, hd);
        const auto k = v.block(0, dim + h * hd, keys, hd);
        const auto val = v.block(0, 2 * dim + h * hd, keys, hd);
        Matrix scores = (q * k.transpose()) * s;
        for (Eigen::Index r = 0; r < n; ++r) {
            const double mx = scores.row(r).maxCoeff();
            scores.row(r) = (scores.row(r).array() - mx).exp();
            scores.row(r) /= scores.row(r).sum();
        }
        out.block(0, h * hd, n, hd) = scores * val;
        (*probs)[h] = std::move(scores);
    }
    Graph& g = *qkv.graph;
    return g.make(std::move(out), {qkv}, [qkv, heads, n, dim, hd, s, keys, probs](Graph& g, const Matrix& G) {
        const Matrix& v = g.value(qkv);
        Matrix d = Matrix::Zero(n, 3 * dim);
        for (int h = 0; h < heads; ++h) {
            const Matrix& a = (*probs)[h];
            const auto q = v.block(0, h * hd, n, hd);
            const auto k = v.block(0, dim + h * hd, keys, hd);
            const auto val = v.block(0, 2 * dim + h * hd, keys, hd);
            const auto gh = G.block(0, h * hd, n, hd);
            const Matrix da = gh * val.transpose();
            d.block(0, 2 * dim + h * hd, keys, hd) = a.transpose() * gh;
            Matrix ds = a.array() * (da.array().colwise() - (da.array() * a.array()).rowwise().sum());
            d.block(0, h * hd, n, hd) = (ds * k) * s;
            d.block(0, dim + h * hd, keys, hd) = (ds.transpose() * q) * s;
        }
        g.accumulate(qkv, d);
    });
}

Var slice_rows(Var x, Eigen::Index start, Eigen::Index count) {
    if (start < 0 || count < 0 || start + count > x.rows())
        throw DimensionError("slice_rows: range outside matrix");
    Graph& g = *x.graph;
    return g.make(x.value().middleRows(start, count), {x}, [x, start, count](Graph& g, const Matrix& G) {
        Matrix d = Matrix::Zero(g.value(x).rows(), g.value(x).cols());
        d.middleRows(start, count) = G;
        g.accumulate(x, d);
    });
}

Var concat_rows(std::span<const Var> parts) {
    if (parts.empty())
        throw DimensionError("concat_rows: nothing to concatenate");
    const Eigen::Index cols = parts.front().cols();
    Eigen::Index rows = 0;
    for (const Var& p : parts) {
        if (p.cols() != cols)
            throw DimensionError("concat_rows: column count mismatch");
        rows += p.rows();
    }
    Matrix out(rows, cols);
    Eigen::Index at = 0;
    for (const Var& p : parts) {
        out.middleRows(at, p.rows()) = p.value();
        at += p.rows();
    }
    std::vector<Var> inputs(parts.begin(), parts.end());
    Graph& g = *parts.front().graph;
    return g.make(std::move(out), parts, [inputs](Graph& g, const Matrix& G) {
        Eigen::Index at = 0;
        for (const Var& p : inputs) {
            const Eigen::Index r = g.value(p).rows();
            if (g.requires_grad(p))
                g.accumulate(p, G.middleRows(at, r));
            at += r;
        }
    });
}

Var gather_rows(std::span<const Var> sources, std::vector<std::pair<int, int>> picks) {
    if (sources.empty())
        throw DimensionError("gather_rows: no sources");
    const Eigen::Index cols = sources.front().cols();
    for (const Var& s : sources)
        if (s.cols() != cols)
            throw DimensionError("gather_rows: column count mismatch");
    Matrix out(static_cast<Eigen::Index>(picks.size()), cols);
    for (std::size_t r = 0; r < picks.size(); ++r) {
        const auto [src, row] = picks[r];
        if (src < 0 || src >= static_cast<int>(sources.size()) || row < 0 || row >= sources[src].rows())
            throw DimensionError("gather_rows: pick outside sources");
        out.row(static_cast<Eigen::Index>(r)) = sources[src].value().row(row);
    }
    std::vector<Var> inputs(sources.begin(), sources.end());
    Graph& g = *sources.front().graph;
    return g.make(std::move(out), sources, [inputs, picks = std::move(picks)](Graph& g, const Matrix& G) {
        std::vector<Matrix> d;
        d.reserve(inputs.size());
        for (const Var& s : inputs)
            d.push_back(g.requires_grad(s) ? Matrix::Zero(g.value(s).rows(), g.value(s).cols()) : Matrix());
        for (std::size_t r = 0; r < picks.size(); ++r) {
            const auto [src, row] = picks[r];
            if (d[src].size() != 0)
                d[src].row(row) += G.row(static_cast<Eigen::Index>(r));
        }
        for (std::size_t i = 0; i < inputs.size(); ++i)
            if (d[i].size() != 0)
                g.accumulate(inputs[i], d[i]);
    });
}

Var permute(Var x, Eigen::Index rows, Eigen::Index cols, std::vector<int> source) {
    if (static_cast<Eigen::Index>(source.size()) != rows * cols)
        throw DimensionError("permute: index map size mismatch");
    const Matrix& v = x.value();
    Matrix out(rows, cols);
    for (std::size_t j = 0; j < source.size(); ++j) {
        if (source[j] < 0 || source[j] >= v.size())
            throw DimensionError("permute: source index outside input");
        out.data()[j] = v.data()[source[j]];
    }
    Graph& g = *x.graph;
    return g.make(std::move(out), {x}, [x, source = std::move(source)](Graph& g, const Matrix& G) {
        Matrix d = Matrix::Zero(g.value(x).rows(), g.value(x).cols());
        for (std::size_t j = 0; j < source.size(); ++j)
            d.data()[source[j]] += G.data()[j];
        g.accumulate(x, d);
    });
}

Var detach(Var x) { return x.graph->constant(x.value()); }

Var highpass(Var image, const FrequencyFilter& filter) {
    const Matrix& v = image.value();
    const int channels = static_cast<int>(v.rows());
    if (v.cols() != static_cast<Eigen::Index>(filter.side()) * filter.side())
        throw DimensionError("highpass: image plane does not match filter size");
    const auto hp = filter.highpass(std::span<const double>(v.data(), v.size()), channels);
    Matrix out = Eigen::Map<const Matrix>(hp.data(), v.rows(), v.cols());
    const FrequencyFilter* f = &filter;
    Graph& g = *image.graph;
    return g.make(std::move(out), {image}, [image, f, channels](Graph& g, const Matrix& G) {
        // The operator is a real symmetric projection, so it is its own adjoint.
        const auto d = f->highpass(std::span<const double>(G.data(), G.size()), channels);
        g.accumulate(image, Eigen::Map<const Matrix>(d.data(), G.rows(), G.cols()));
    });
}

Var masked_spectrum(Var image, const FrequencyFilter& filter) {
    const Matrix& v = image.value();
    const int channels = static_cast<int>(v.rows());
    const Eigen::Index plane = v.cols();
    if (plane != static_cast<Eigen::Index>(filter.side()) * filter.side())
        throw DimensionError("masked_spectrum: image plane does not match filter size");
    const Spectrum s = filter.freq_mask(std::span<const double>(v.data(), v.size()), channels);
    Matrix out(2 * channels, plane);
    for (int c = 0; c < channels; ++c)
        for (Eigen::Index k = 0; k < plane; ++k) {
            const auto& b = s.bins[static_cast<std::size_t>(c * plane + k)];
            out(c, k) = b.real();
            out(channels + c, k) = b.imag();
        }
    const FrequencyFilter* f = &filter;
    Graph& g = *image.graph;
    return g.make(std::move(out), {image}, [image, f, channels, plane](Graph& g, const Matrix& G) {
        const Matrix re = G.topRows(channels);
        const Matrix im = G.bottomRows(channels);
        const auto d = f->masked_spectrum_adjoint(std::span<const double>(re.data(), re.size()),
                                                  std::span<const double>(im.data(), im.size()), channels);
        g.accumulate(image, Eigen::Map<const Matrix>(d.data(), channels, plane));
    });
}

Var cross_entropy(Var logits, int label) {
    const Matrix& v = logits.value();
    if (v.rows() != 1)
        throw DimensionError("cross_entropy: logits must be a row vector");
    if (label < 0 || label >= v.cols())
        throw InvalidArgument("cross_entropy: label " + std::to_string(label) + " outside head range");
    const double mx = v.maxCoeff();
    const double lse = mx + std::log((v.array() - mx).exp().sum());
    Matrix out(1, 1);
    out(0, 0) = lse - v(0, label);
    Graph& g = *logits.graph;
    return g.make(std::move(out), {logits}, [logits, label, lse](Graph& g, const Matrix& G) {
        Matrix d = (g.value(logits).array() - lse).exp();
        d(0, label) -= 1.0;
        g.accumulate(logits, d * G(0, 0));
    });
}

Var mse(Var pred, const Matrix& target, const Matrix* weight) {
    const Matrix& v = pred.value();
    if (v.rows() != target.rows() || v.cols() != target.cols())
        throw DimensionError("mse: shape mismatch");
    if (weight && (weight->rows() != target.rows() || weight->cols() != target.cols()))
        throw DimensionError("mse: weight shape mismatch");
    Matrix diff = v - target;
    double count = static_cast<double>(v.size());
    if (weight) {
        diff.array() *= weight->array();
        count = weight->sum();
    }
    Matrix out(1, 1);
    out(0, 0) = count > 0 ? diff.squaredNorm() / count : 0.0;
    Graph& g = *pred.graph;
    auto d = std::make_shared<Matrix>(std::move(diff));
    return g.make(std::move(out), {pred}, [pred, d, count](Graph& g, const Matrix& G) {
        if (count > 0)
            g.accumulate(pred, (*d) * (2.0 * G(0, 0) / count));
    });
}

Var l1_mean(Var pred, const Matrix& target) {
    const Matrix& v = pred.value();
    if (v.rows() != target.rows() || v.cols() != target.cols())
        throw DimensionError("l1_mean: shape mismatch");
    auto diff = std::make_shared<Matrix>(v - target);
    Matrix out(1, 1);
    out(0, 0) = diff->cwiseAbs().sum() / static_cast<double>(v.size());
    Graph& g = *pred.graph;
    return g.make(std::move(out), {pred}, [pred, diff](Graph& g, const Matrix& G) {
        const double s = G(0, 0) / static_cast<double>(diff->size());
        g.accumulate(pred, diff->unaryExpr([s](double x) { return x > 0 ? s : (x < 0 ? -s : 0.0); }));
    });
}

Var weighted_sum(std::span<const std::pair<Var, double>> terms) {
    if (terms.empty())
        throw DimensionError("weighted_sum: no terms");
    Matrix out = Matrix::Zero(1, 1);
    std::vector<Var> inputs;
    std::vector<double> weights;
    for (const auto& [v, w] : terms) {
        if (v.value().size() != 1)
            throw DimensionError("weighted_sum: terms must be scalars");
        out(0, 0) += w * v.value()(0, 0);
        inputs.push_back(v);
        weights.push_back(w);
    }
    Graph& g = *terms.front().first.graph;
    return g.make(std::move(out), inputs, [inputs, weights](Graph& g, const Matrix& G) {
        for (std::size_t i = 0; i < inputs.size(); ++i)
            if (weights[i] != 0.0)
                g.accumulate(inputs[i], G * weights[i]);
    });
}

} // namespace bmae::ad
