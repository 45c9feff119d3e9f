// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The bmae Authors

#pragma once

#include <span>
#include <string>

#include "bmae/autodiff.hpp"
#include "bmae/frequency.hpp"
#include "bmae/image.hpp"

namespace bmae {

struct LossWeights {
    double cls = 0.01;
    double rec = 1.0;
    double det = 1.0;

    void validate() const;
    bool operator==(const LossWeights&) const = default;
};

struct LossReport {
    double cls = 0.0;
    double rec = 0.0;
    double det = 0.0;
    double total = 0.0;

    bool operator==(const LossReport&) const = default;
};

/// Weighted combination. Throws NonFiniteLoss naming the first diverging term.
LossReport total_loss(double cls, double rec, double det, const LossWeights& weights);

// Value-only reference forms.
/// Cross-entropy of one logit row. Throws InvalidArgument if the label is
/// outside the head.
double loss_cls(std::span<const double> logits, int label);
/// Mean over the batch.
double loss_cls_batch(std::span<const std::vector<double>> logits, std::span<const int> labels);
double loss_rec(const ImageTensor& x, const ImageTensor& x_hat);
/// Mean absolute difference over the real and imaginary components of
/// M(detail_decoded) and M(x_hat2 - x_hat1). Both spectra are scaled by
/// 1/side (the unitary DFT), so the loss is on the same scale as a pixel L1
/// at any resolution.
double loss_det(const ImageTensor& detail_decoded, const ImageTensor& x_hat1, const ImageTensor& x_hat2,
                const FrequencyFilter& filter);

// Graph forms. Targets are plain values, so no gradient can reach whatever
// produced them.
ad::Var loss_rec(ad::Var x_hat, const Matrix& x, const Matrix* visible_weight = nullptr);
ad::Var loss_det(ad::Var detail_decoded, const Matrix& x_hat1, const Matrix& x_hat2, const FrequencyFilter& filter);

/// Spectrum target [Re; Im] of M(x_hat2 - x_hat1) in the layout produced by
/// ad::masked_spectrum.
Matrix detail_target(const Matrix& x_hat1, const Matrix& x_hat2, const FrequencyFilter& filter);

} // namespace bmae
