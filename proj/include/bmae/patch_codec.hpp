// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The bmae Authors

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "bmae/common.hpp"
#include "bmae/image.hpp"

namespace bmae {

/// Position of a patch on the (S/P) x (S/P) grid.
struct PatchIndex {
    int row = 0;
    int col = 0;
    bool operator==(const PatchIndex&) const = default;
    auto operator<=>(const PatchIndex&) const = default;
};

/// Non-overlapping patches of one image. Row k holds the patch at grid
/// position (k / grid_side, k % grid_side); within a row pixels are laid out
/// as (py, px, channel).
struct PatchGrid {
    Matrix patches;
    int grid_side = 0;
    int patch_side = 0;
    int channels = 0;

    int full_count() const noexcept { return grid_side * grid_side; }
    int patch_dim() const noexcept { return patch_side * patch_side * channels; }
};

/// The set of visible patches after random masking, sorted in row-major
/// grid order.
struct MaskPlan {
    std::vector<PatchIndex> kept;
    double mask_ratio = 0.0;
    int grid_side = 0;

    std::size_t kept_count() const noexcept { return kept.size(); }
    int flat(std::size_t k) const noexcept { return kept[k].row * grid_side + kept[k].col; }
    /// visible[g] is true iff flat grid index g is kept.
    std::vector<bool> visibility() const;

    bool operator==(const MaskPlan&) const = default;
};

/// floor(full_count * (1 - ratio)), robust to binary rounding of the ratio
/// (100 * (1 - 0.9) evaluates to 9.999...; this returns 10).
std::size_t kept_patch_count(std::size_t full_count, double mask_ratio);

PatchGrid patchify(const ImageTensor& image, int patch_side);
ImageTensor unpatchify(const PatchGrid& grid);

/// Uniformly samples kept_patch_count(grid_side^2, ratio) distinct grid
/// positions without replacement.
MaskPlan sample_mask(int grid_side, double mask_ratio, Rng& rng);

/// A mask plan that keeps every patch.
MaskPlan full_plan(int grid_side);

/// One stored exemplar: the kept patches quantized to 8 bits plus their
/// grid indices and class label.
struct PatchSet {
    std::uint16_t image_side = 0;
    std::uint8_t patch_side = 0;
    std::uint8_t channels = 0;
    std::uint16_t label = 0;
    std::vector<PatchIndex> kept;
    std::vector<std::uint8_t> pixels; // kept.size() * patch_side^2 * channels

    std::size_t patch_dim() const noexcept {
        return static_cast<std::size_t>(patch_side) * patch_side * channels;
    }
    std::size_t payload_bytes() const noexcept { return pixels.size(); }
    std::size_t index_bytes() const noexcept { return 2 * kept.size(); }
    std::size_t serialized_bytes() const noexcept;

    bool operator==(const PatchSet&) const = default;
};

/// Bytes of the fixed record header: magic(4) version(1) S(2) P(1) C(1) N(2) label(2).
inline constexpr std::size_t kPatchSetHeaderBytes = 13;
inline constexpr std::uint8_t kPatchSetVersion = 1;

/// header + 2N + N * P * P * C.
std::size_t patch_set_size(int patch_side, int channels, std::size_t kept);

std::uint8_t quantize_pixel(double value) noexcept;
double dequantize_pixel(std::uint8_t byte) noexcept;

/// The patch side is image side / plan.grid_side. Throws OverflowError when
/// the grid side reaches 256 (indices would no longer fit one byte).
PatchSet encode_exemplar(const ImageTensor& image, const MaskPlan& plan, int label);

struct DecodedExemplar {
    PatchGrid grid;   // full grid; masked rows are zero
    MaskPlan plan;
    int label = 0;
};

DecodedExemplar decode_exemplar(const PatchSet& ps);

/// Appends the little-endian record to `out`.
void write_patch_set(const PatchSet& ps, std::vector<std::uint8_t>& out);

/// Parses one record starting at `offset` and advances it. Throws
/// CorruptionError carrying the failing offset.
PatchSet read_patch_set(std::span<const std::uint8_t> bytes, std::size_t& offset);

std::vector<std::uint8_t> serialize(const PatchSet& ps);

} // namespace bmae
