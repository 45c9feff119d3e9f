// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The bmae Authors

#pragma once

#include <complex>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "bmae/common.hpp"

namespace bmae {

struct FrequencyMaskSpec {
    /// Radius of the removed low-frequency disk as a fraction of the
    /// Nyquist radius. The DC bin is always removed.
    double cutoff_fraction = 0.25;

    void validate() const;
    bool operator==(const FrequencyMaskSpec&) const = default;
};

/// Per-channel 2D spectrum in standard (uncentered) DFT bin order.
struct Spectrum {
    int channels = 0;
    int side = 0;
    std::vector<std::complex<double>> bins; // (channels, side, side)

    double energy() const;
};

/// 2D DFT on square images plus the circular low-frequency mask. The DFT is
/// evaluated as two dense products with a precomputed DFT matrix, which is
/// exact to rounding for any side length.
class FrequencyFilter {
public:
    FrequencyFilter(int side, FrequencyMaskSpec spec);

    int side() const noexcept { return side_; }
    const FrequencyMaskSpec& spec() const noexcept { return spec_; }

    /// keep()[k] is 1 for bins that survive the mask, 0 for removed bins.
    const std::vector<double>& keep() const noexcept { return keep_; }

    /// `pixels` in (C, S, S) layout.
    Spectrum fft2(std::span<const double> pixels, int channels) const;

    /// Real part of the inverse transform. Writes the largest discarded
    /// imaginary magnitude to `max_imag` when given, and logs a diagnostic
    /// when it exceeds 1e-5.
    std::vector<double> ifft2(const Spectrum& spectrum, double* max_imag = nullptr) const;

    Spectrum apply_mask(Spectrum spectrum) const;

    /// fft2 followed by the low-frequency mask.
    Spectrum freq_mask(std::span<const double> pixels, int channels) const;

    /// real(ifft2(freq_mask(x))): a self-adjoint linear projection.
    std::vector<double> highpass(std::span<const double> pixels, int channels) const;

    /// Adjoint of x -> (Re, Im) of freq_mask(x): given gradients with respect
    /// to the real and imaginary parts, returns the gradient with respect to x.
    std::vector<double> masked_spectrum_adjoint(std::span<const double> grad_re,
                                                std::span<const double> grad_im,
                                                int channels) const;

private:
    using ComplexMatrix = Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic>;

    int side_;
    FrequencyMaskSpec spec_;
    ComplexMatrix forward_;  // W[j][k] = exp(-2 pi i j k / S)
    ComplexMatrix inverse_;  // conj(W) / S
    std::vector<double> keep_;
};

} // namespace bmae
