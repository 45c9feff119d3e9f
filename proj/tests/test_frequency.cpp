// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The bmae Authors

#include <cmath>
#include <complex>
#include <numbers>

#include "bmae/frequency.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace bmae;
using bmae::testing::random_image;

namespace {

// Direct O(S^4) DFT of one channel.
std::complex<double> naive_bin(std::span<const double> plane, int side, int ky, int kx) {
    std::complex<double> acc = 0;
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) {
            const double phase = -2.0 * std::numbers::pi * (static_cast<double>(ky * y) / side +
                                                            static_cast<double>(kx * x) / side);
            acc += plane[y * side + x] * std::polar(1.0, phase);
        }
    return acc;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += a[i] * b[i];
    return s;
}

} // namespace

TEST_CASE("fft2 matches a direct DFT") {
    Rng rng(1);
    for (int side : {5, 6, 8}) {
        const ImageTensor img = random_image(2, side, rng);
        const FrequencyFilter filter(side, {});
        const Spectrum spec = filter.fft2(img.pixels(), 2);
        for (int c = 0; c < 2; ++c) {
            const auto plane = img.pixels().subspan(static_cast<std::size_t>(c) * side * side, side * side);
            for (int ky = 0; ky < side; ++ky)
                for (int kx = 0; kx < side; ++kx) {
                    const auto got = spec.bins[(c * side + ky) * side + kx];
                    const auto want = naive_bin(plane, side, ky, kx);
                    CHECK(std::abs(got - want) < 1e-10);
                }
        }
    }
}

TEST_CASE("inverse transform round-trips and conserves energy") {
    Rng rng(2);
    for (int side : {7, 16, 32}) {
        const ImageTensor img = random_image(3, side, rng);
        const FrequencyFilter filter(side, {});
        const Spectrum spec = filter.fft2(img.pixels(), 3);
        double max_imag = 1;
        const auto back = filter.ifft2(spec, &max_imag);
        CHECK(max_imag < 1e-10);
        for (std::size_t i = 0; i < back.size(); ++i)
            CHECK(std::abs(back[i] - img.pixels()[i]) < 1e-6);
        // Parseval for the unnormalized forward transform.
        const double spatial = dot(img.pixels(), img.pixels());
        CHECK(std::abs(spec.energy() / (side * side) - spatial) < 1e-6 * std::max(1.0, spatial));
    }
}

TEST_CASE("the mask removes the DC bin and the low-frequency disk") {
    for (int side : {8, 9, 32}) {
        for (double cutoff : {0.0, 0.25, 0.5, 1.0}) {
            const FrequencyFilter filter(side, {cutoff});
            for (int ky = 0; ky < side; ++ky)
                for (int kx = 0; kx < side; ++kx) {
                    // Signed frequency of each bin, radius relative to Nyquist.
                    const int fy = 2 * ky < side ? ky : ky - side;
                    const int fx = 2 * kx < side ? kx : kx - side;
                    const double radius = std::hypot(fy, fx) / (side / 2.0);
                    const bool removed = (ky == 0 && kx == 0) || radius <= cutoff;
                    CHECK(filter.keep()[ky * side + kx] == (removed ? 0.0 : 1.0));
                }
        }
    }
    CHECK_THROWS_AS(FrequencyFilter(8, {-0.1}), ConfigError);
    CHECK_THROWS_AS(FrequencyFilter(8, {1.5}), ConfigError);
}

TEST_CASE("a constant image vanishes under the high-pass filter") {
    const FrequencyFilter filter(16, {});
    ImageTensor img(3, 16);
    for (double& v : img.pixels())
        v = 0.37;
    for (double v : filter.highpass(img.pixels(), 3))
        CHECK(std::abs(v) < 1e-12);
    const Spectrum masked = filter.freq_mask(img.pixels(), 3);
    CHECK(masked.energy() < 1e-20);
}

TEST_CASE("the high-pass filter is a self-adjoint projection with a real output") {
    Rng rng(3);
    for (int side : {8, 11}) {
        const FrequencyFilter filter(side, {0.3});
        const ImageTensor a = random_image(3, side, rng);
        const ImageTensor b = random_image(3, side, rng);
        const auto ha = filter.highpass(a.pixels(), 3);
        const auto hb = filter.highpass(b.pixels(), 3);
        CHECK(std::abs(dot(ha, b.pixels()) - dot(a.pixels(), hb)) < 1e-9);
        const auto hha = filter.highpass(ha, 3);
        for (std::size_t i = 0; i < ha.size(); ++i)
            CHECK(std::abs(hha[i] - ha[i]) < 1e-9);
        double max_imag = 1;
        filter.ifft2(filter.freq_mask(a.pixels(), 3), &max_imag);
        CHECK(max_imag < 1e-10);
    }
}

TEST_CASE("masked spectrum adjoint satisfies the inner-product identity") {
    Rng rng(4);
    const int side = 8;
    const FrequencyFilter filter(side, {});
    const ImageTensor x = random_image(2, side, rng);
    const ImageTensor gr = random_image(2, side, rng);
    const ImageTensor gi = random_image(2, side, rng);
    const Spectrum m = filter.freq_mask(x.pixels(), 2);
    double lhs = 0;
    for (std::size_t i = 0; i < m.bins.size(); ++i)
        lhs += m.bins[i].real() * gr.pixels()[i] + m.bins[i].imag() * gi.pixels()[i];
    const auto adj = filter.masked_spectrum_adjoint(gr.pixels(), gi.pixels(), 2);
    CHECK(std::abs(lhs - dot(x.pixels(), adj)) < 1e-9);
}
