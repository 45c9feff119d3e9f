// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The bmae Authors

#include "bmae/frequency.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace bmae {

void FrequencyMaskSpec::validate() const {
    if (!(cutoff_fraction >= 0.0 && cutoff_fraction <= 1.0))
        throw ConfigError("freq.cutoff_fraction must lie in [0, 1]");
}

double Spectrum::energy() const {
    double e = 0.0;
    for (const auto& b : bins)
        e += std::norm(b);
    return e;
}

FrequencyFilter::FrequencyFilter(int side, FrequencyMaskSpec spec) : side_(side), spec_(spec) {
    if (side < 2)
        throw DimensionError("frequency filter needs spatial size of at least 2x2");
    spec_.validate();
    forward_.resize(side, side);
    inverse_.resize(side, side);
    for (int j = 0; j < side; ++j)
        for (int k = 0; k < side; ++k) {
            // Reduce j*k modulo side first so the phase stays exact for large sides.
            const double phase = -2.0 * std::numbers::pi * static_cast<double>((j * k) % side) / side;
            forward_(j, k) = std::polar(1.0, phase);
            inverse_(j, k) = std::conj(forward_(j, k)) / static_cast<double>(side);
        }

    const double nyquist = side / 2.0;
    auto centered = [side](int k) { return k <= (side - 1) / 2 ? k : k - side; };
    keep_.assign(static_cast<std::size_t>(side) * side, 1.0);
    for (int ky = 0; ky < side; ++ky)
        for (int kx = 0; kx < side; ++kx) {
            const double fy = centered(ky);
            const double fx = centered(kx);
            const double radius = std::sqrt(fy * fy + fx * fx) / nyquist;
            const bool is_dc = ky == 0 && kx == 0;
            if (is_dc || radius <= spec_.cutoff_fraction)
                keep_[static_cast<std::size_t>(ky) * side + kx] = 0.0;
        }
}

Spectrum FrequencyFilter::fft2(std::span<const double> pixels, int channels) const {
    const std::size_t plane = static_cast<std::size_t>(side_) * side_;
    if (pixels.size() != plane * channels)
        throw DimensionError("fft2: pixel buffer does not match (C, S, S)");
    Spectrum out;
    out.channels = channels;
    out.side = side_;
    out.bins.resize(pixels.size());
    ComplexMatrix x(side_, side_);
    for (int c = 0; c < channels; ++c) {
        for (int y = 0; y < side_; ++y)
            for (int xx = 0; xx < side_; ++xx)
                x(y, xx) = pixels[c * plane + static_cast<std::size_t>(y) * side_ + xx];
        const ComplexMatrix f = forward_ * x * forward_;
        for (int ky = 0; ky < side_; ++ky)
            for (int kx = 0; kx < side_; ++kx)
                out.bins[c * plane + static_cast<std::size_t>(ky) * side_ + kx] = f(ky, kx);
    }
    return out;
}

std::vector<double> FrequencyFilter::ifft2(const Spectrum& spectrum, double* max_imag) const {
    if (spectrum.side != side_)
        throw DimensionError("ifft2: spectrum size does not match filter");
    const std::size_t plane = static_cast<std::size_t>(side_) * side_;
    std::vector<double> out(spectrum.bins.size());
    ComplexMatrix f(side_, side_);
    double worst = 0.0;
    for (int c = 0; c < spectrum.channels; ++c) {
        for (int ky = 0; ky < side_; ++ky)
            for (int kx = 0; kx < side_; ++kx)
                f(ky, kx) = spectrum.bins[c * plane + static_cast<std::size_t>(ky) * side_ + kx];
        const ComplexMatrix x = inverse_ * f * inverse_;
        for (int y = 0; y < side_; ++y)
            for (int xx = 0; xx < side_; ++xx) {
                out[c * plane + static_cast<std::size_t>(y) * side_ + xx] = x(y, xx).real();
                worst = std::max(worst, std::abs(x(y, xx).imag()));
            }
    }
    if (max_imag)
        *max_imag = worst;
    if (worst > 1e-5)
        log_warn("ifft2 discarded an imaginary residual of " + std::to_string(worst) +
                 "; input spectrum is not conjugate-symmetric");
    return out;
}

Spectrum FrequencyFilter::apply_mask(Spectrum spectrum) const {
    const std::size_t plane = keep_.size();
    for (std::size_t i = 0; i < spectrum.bins.size(); ++i)
        spectrum.bins[i] *= keep_[i % plane];
    return spectrum;
}

Spectrum FrequencyFilter::freq_mask(std::span<const double> pixels, int channels) const {
    return apply_mask(fft2(pixels, channels));
}

std::vector<double> FrequencyFilter::highpass(std::span<const double> pixels, int channels) const {
    return ifft2(freq_mask(pixels, channels));
}

std::vector<double> FrequencyFilter::masked_spectrum_adjoint(std::span<const double> grad_re,
                                                             std::span<const double> grad_im,
                                                             int channels) const {
    const std::size_t plane = keep_.size();
    if (grad_re.size() != plane * channels || grad_im.size() != plane * channels)
        throw DimensionError("masked_spectrum_adjoint: gradient size mismatch");
    Spectrum g;
    g.channels = channels;
    g.side = side_;
    g.bins.resize(grad_re.size());
    for (std::size_t i = 0; i < g.bins.size(); ++i)
        g.bins[i] = keep_[i % plane] * std::complex<double>(grad_re[i], grad_im[i]);
    // The masked gradient spectrum is generally not conjugate-symmetric; only
    // the real part is wanted here, so skip the diagnostic path of ifft2.
    std::vector<double> out(g.bins.size());
    ComplexMatrix f(side_, side_);
    const double scale = static_cast<double>(plane);
    for (int c = 0; c < channels; ++c) {
        for (int ky = 0; ky < side_; ++ky)
            for (int kx = 0; kx < side_; ++kx)
                f(ky, kx) = g.bins[c * plane + static_cast<std::size_t>(ky) * side_ + kx];
        const ComplexMatrix x = inverse_ * f * inverse_;
        for (int y = 0; y < side_; ++y)
            for (int xx = 0; xx < side_; ++xx)
                out[c * plane + static_cast<std::size_t>(y) * side_ + xx] = scale * x(y, xx).real();
    }
    return out;
}

} // namespace bmae
