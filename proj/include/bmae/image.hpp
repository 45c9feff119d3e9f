// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The bmae Authors

#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "bmae/common.hpp"

namespace bmae {

/// A square multi-channel image in channel-major (C, S, S) layout with
/// pixel values in [0, 1].
class ImageTensor {
public:
    ImageTensor() = default;
    ImageTensor(int channels, int side);
    ImageTensor(int channels, int side, std::vector<double> pixels);

    int channels() const noexcept { return channels_; }
    int side() const noexcept { return side_; }
    std::size_t numel() const noexcept { return pixels_.size(); }
    bool empty() const noexcept { return pixels_.empty(); }

    double& at(int c, int y, int x) { return pixels_[index(c, y, x)]; }
    double at(int c, int y, int x) const { return pixels_[index(c, y, x)]; }

    std::span<double> pixels() noexcept { return pixels_; }
    std::span<const double> pixels() const noexcept { return pixels_; }

    /// Throws InvalidArgument if any pixel lies outside [0, 1] or is NaN.
    void validate_range() const;

    /// Copy with every pixel clamped into [0, 1].
    ImageTensor clamped() const;

    bool operator==(const ImageTensor&) const = default;

private:
    std::size_t index(int c, int y, int x) const noexcept {
        return (static_cast<std::size_t>(c) * side_ + y) * side_ + x;
    }

    int channels_ = 0;
    int side_ = 0;
    std::vector<double> pixels_;
};

/// Mean squared difference over all pixels. Shapes must match.
double mean_squared_error(const ImageTensor& a, const ImageTensor& b);

/// Binary PPM (P6) of a 3-channel image; pixels are clamped and rounded to
/// 8 bits. Throws IoError on write failure.
void write_ppm(const ImageTensor& image, const std::filesystem::path& path);

} // namespace bmae
