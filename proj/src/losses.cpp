// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The bmae Authors

#include "bmae/losses.hpp"

#include <algorithm>
#include <cmath>

namespace bmae {

namespace {

// Unitary normalization of a side x side DFT.
double spectrum_scale(const FrequencyFilter& filter) { return 1.0 / static_cast<double>(filter.side()); }

} // namespace

void LossWeights::validate() const {
    if (!(cls >= 0.0) || !(rec >= 0.0) || !(det >= 0.0))
        throw ConfigError("loss weights must be non-negative");
}

LossReport total_loss(double cls, double rec, double det, const LossWeights& w) {
    if (!std::isfinite(cls))
        throw NonFiniteLoss("cls");
    if (!std::isfinite(rec))
        throw NonFiniteLoss("rec");
    if (!std::isfinite(det))
        throw NonFiniteLoss("det");
    LossReport r;
    r.cls = cls;
    r.rec = rec;
    r.det = det;
    r.total = w.cls * cls + w.rec * rec + w.det * det;
    return r;
}

double loss_cls(std::span<const double> logits, int label) {
    if (label < 0 || static_cast<std::size_t>(label) >= logits.size())
        throw InvalidArgument("label " + std::to_string(label) + " outside head range");
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double l : logits)
        sum += std::exp(l - mx);
    return mx + std::log(sum) - logits[label];
}

double loss_cls_batch(std::span<const std::vector<double>> logits, std::span<const int> labels) {
    if (logits.size() != labels.size() || logits.empty())
        throw DimensionError("loss_cls_batch: logits and labels differ in count");
    double acc = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i)
        acc += loss_cls(logits[i], labels[i]);
    return acc / static_cast<double>(logits.size());
}

double loss_rec(const ImageTensor& x, const ImageTensor& x_hat) { return mean_squared_error(x, x_hat); }

Matrix detail_target(const Matrix& x_hat1, const Matrix& x_hat2, const FrequencyFilter& filter) {
    if (x_hat1.rows() != x_hat2.rows() || x_hat1.cols() != x_hat2.cols())
        throw DimensionError("detail_target: reconstructions differ in shape");
    const Matrix diff = x_hat2 - x_hat1;
    const int channels = static_cast<int>(diff.rows());
    const Eigen::Index plane = diff.cols();
    const Spectrum s = filter.freq_mask(std::span<const double>(diff.data(), diff.size()), channels);
    Matrix out(2 * channels, plane);
    for (int c = 0; c < channels; ++c)
        for (Eigen::Index k = 0; k < plane; ++k) {
            const auto& b = s.bins[static_cast<std::size_t>(c * plane + k)];
            out(c, k) = b.real();
            out(channels + c, k) = b.imag();
        }
    return out;
}

double loss_det(const ImageTensor& detail_decoded, const ImageTensor& x_hat1, const ImageTensor& x_hat2,
                const FrequencyFilter& filter) {
    if (detail_decoded.channels() != x_hat1.channels() || detail_decoded.side() != x_hat1.side() ||
        x_hat1.channels() != x_hat2.channels() || x_hat1.side() != x_hat2.side())
        throw DimensionError("loss_det: shape mismatch");
    const int c = detail_decoded.channels();
    const Spectrum pred = filter.freq_mask(detail_decoded.pixels(), c);
    std::vector<double> diff(x_hat1.numel());
    for (std::size_t i = 0; i < diff.size(); ++i)
        diff[i] = x_hat2.pixels()[i] - x_hat1.pixels()[i];
    const Spectrum target = filter.freq_mask(diff, c);
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.bins.size(); ++i)
        acc += std::abs(pred.bins[i].real() - target.bins[i].real()) +
               std::abs(pred.bins[i].imag() - target.bins[i].imag());
    return acc * spectrum_scale(filter) / (2.0 * static_cast<double>(pred.bins.size()));
}

ad::Var loss_rec(ad::Var x_hat, const Matrix& x, const Matrix* visible_weight) {
    return ad::mse(x_hat, x, visible_weight);
}

ad::Var loss_det(ad::Var detail_decoded, const Matrix& x_hat1, const Matrix& x_hat2, const FrequencyFilter& filter) {
    const double s = spectrum_scale(filter);
    return ad::l1_mean(ad::scale(ad::masked_spectrum(detail_decoded, filter), s),
                       detail_target(x_hat1, x_hat2, filter) * s);
}

} // namespace bmae
