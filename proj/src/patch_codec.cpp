// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The bmae Authors

#include "bmae/patch_codec.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace bmae {

namespace {

constexpr std::uint8_t kMagic[4] = {'B', 'M', 'A', 'E'};

void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) { out.push_back(v); }

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

class Reader {
public:
    Reader(std::span<const std::uint8_t> bytes, std::size_t& offset)
        : bytes_(bytes), offset_(offset) {}

    void need(std::size_t n, const char* what) const {
        if (offset_ + n > bytes_.size())
            throw CorruptionError(std::string("truncated exemplar record: ") + what, offset_);
    }
    std::uint8_t u8(const char* what) {
        need(1, what);
        return bytes_[offset_++];
    }
    std::uint16_t u16(const char* what) {
        need(2, what);
        const auto v = static_cast<std::uint16_t>(bytes_[offset_] | (bytes_[offset_ + 1] << 8));
        offset_ += 2;
        return v;
    }
    std::size_t offset() const { return offset_; }
    std::span<const std::uint8_t> take(std::size_t n, const char* what) {
        need(n, what);
        auto s = bytes_.subspan(offset_, n);
        offset_ += n;
        return s;
    }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t& offset_;
};

} // namespace

std::vector<bool> MaskPlan::visibility() const {
    std::vector<bool> visible(static_cast<std::size_t>(grid_side) * grid_side, false);
    for (std::size_t k = 0; k < kept.size(); ++k)
        visible[flat(k)] = true;
    return visible;
}

std::size_t kept_patch_count(std::size_t full_count, double mask_ratio) {
    const double exact = static_cast<double>(full_count) * (1.0 - mask_ratio);
    return static_cast<std::size_t>(std::floor(exact + 1e-9));
}

PatchGrid patchify(const ImageTensor& image, int patch_side) {
    if (patch_side <= 0 || image.side() % patch_side != 0)
        throw DimensionError("patchify: image side " + std::to_string(image.side()) +
                             " is not divisible by patch side " + std::to_string(patch_side));
    PatchGrid grid;
    grid.grid_side = image.side() / patch_side;
    grid.patch_side = patch_side;
    grid.channels = image.channels();
    grid.patches.resize(grid.full_count(), grid.patch_dim());
    const int c_count = image.channels();
    for (int gr = 0; gr < grid.grid_side; ++gr)
        for (int gc = 0; gc < grid.grid_side; ++gc) {
            const int row = gr * grid.grid_side + gc;
            int col = 0;
            for (int py = 0; py < patch_side; ++py)
                for (int px = 0; px < patch_side; ++px)
                    for (int c = 0; c < c_count; ++c)
                        grid.patches(row, col++) =
                            image.at(c, gr * patch_side + py, gc * patch_side + px);
        }
    return grid;
}

ImageTensor unpatchify(const PatchGrid& grid) {
    if (grid.patches.rows() != grid.full_count() || grid.patches.cols() != grid.patch_dim())
        throw DimensionError("unpatchify: patch matrix does not match grid geometry");
    const int side = grid.grid_side * grid.patch_side;
    ImageTensor image(grid.channels, side);
    for (int gr = 0; gr < grid.grid_side; ++gr)
        for (int gc = 0; gc < grid.grid_side; ++gc) {
            const int row = gr * grid.grid_side + gc;
            int col = 0;
            for (int py = 0; py < grid.patch_side; ++py)
                for (int px = 0; px < grid.patch_side; ++px)
                    for (int c = 0; c < grid.channels; ++c)
                        image.at(c, gr * grid.patch_side + py, gc * grid.patch_side + px) =
                            grid.patches(row, col++);
        }
    return image;
}

MaskPlan sample_mask(int grid_side, double mask_ratio, Rng& rng) {
    if (!(mask_ratio >= 0.0 && mask_ratio < 1.0))
        throw InvalidArgument("mask ratio must lie in [0, 1)");
    if (grid_side <= 0)
        throw DimensionError("grid side must be positive");
    const std::size_t full = static_cast<std::size_t>(grid_side) * grid_side;
    const std::size_t keep = kept_patch_count(full, mask_ratio);

    // Partial Fisher-Yates: the first `keep` slots become a uniform subset.
    std::vector<int> order(full);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = 0; i < keep; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, full - 1);
        std::swap(order[i], order[pick(rng)]);
    }
    std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep));

    MaskPlan plan;
    plan.mask_ratio = mask_ratio;
    plan.grid_side = grid_side;
    plan.kept.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i)
        plan.kept.push_back({order[i] / grid_side, order[i] % grid_side});
    return plan;
}

MaskPlan full_plan(int grid_side) {
    MaskPlan plan;
    plan.grid_side = grid_side;
    plan.mask_ratio = 0.0;
    for (int r = 0; r < grid_side; ++r)
        for (int c = 0; c < grid_side; ++c)
            plan.kept.push_back({r, c});
    return plan;
}

std::size_t patch_set_size(int patch_side, int channels, std::size_t kept) {
    const std::size_t dim = static_cast<std::size_t>(patch_side) * patch_side * channels;
    return kPatchSetHeaderBytes + 2 * kept + kept * dim;
}

std::size_t PatchSet::serialized_bytes() const noexcept {
    return kPatchSetHeaderBytes + index_bytes() + payload_bytes();
}

std::uint8_t quantize_pixel(double value) noexcept {
    const double clamped = std::clamp(value, 0.0, 1.0);
    return static_cast<std::uint8_t>(std::lround(clamped * 255.0));
}

double dequantize_pixel(std::uint8_t byte) noexcept { return static_cast<double>(byte) / 255.0; }

PatchSet encode_exemplar(const ImageTensor& image, const MaskPlan& plan, int label) {
    if (plan.grid_side <= 0 || image.side() % plan.grid_side != 0)
        throw DimensionError("encode_exemplar: mask plan does not match image side");
    if (plan.grid_side >= 256)
        throw OverflowError("encode_exemplar: grid side " + std::to_string(plan.grid_side) +
                            " does not fit one index byte");
    const int patch_side = image.side() / plan.grid_side;
    if (image.side() > 0xFFFF || patch_side > 0xFF || image.channels() > 0xFF)
        throw OverflowError("encode_exemplar: geometry exceeds header field widths");
    if (label < 0 || label > 0xFFFF)
        throw OverflowError("encode_exemplar: label does not fit 16 bits");
    if (plan.kept.size() > 0xFFFF)
        throw OverflowError("encode_exemplar: too many kept patches");
    for (const auto& idx : plan.kept)
        if (idx.row < 0 || idx.col < 0 || idx.row >= plan.grid_side || idx.col >= plan.grid_side)
            throw DimensionError("encode_exemplar: kept index outside grid");

    const PatchGrid grid = patchify(image, patch_side);
    PatchSet ps;
    ps.image_side = static_cast<std::uint16_t>(image.side());
    ps.patch_side = static_cast<std::uint8_t>(patch_side);
    ps.channels = static_cast<std::uint8_t>(image.channels());
    ps.label = static_cast<std::uint16_t>(label);
    ps.kept = plan.kept;
    ps.pixels.reserve(plan.kept.size() * grid.patch_dim());
    for (std::size_t k = 0; k < plan.kept.size(); ++k) {
        const int row = plan.flat(k);
        for (int j = 0; j < grid.patch_dim(); ++j)
            ps.pixels.push_back(quantize_pixel(grid.patches(row, j)));
    }
    return ps;
}

DecodedExemplar decode_exemplar(const PatchSet& ps) {
    if (ps.patch_side == 0 || ps.channels == 0 || ps.image_side % ps.patch_side != 0)
        throw CorruptionError("exemplar geometry is inconsistent", 0);
    const int grid_side = ps.image_side / ps.patch_side;
    const std::size_t dim = ps.patch_dim();
    if (ps.pixels.size() != ps.kept.size() * dim)
        throw CorruptionError("exemplar payload size does not match kept count", 0);

    DecodedExemplar out;
    out.label = ps.label;
    out.plan.grid_side = grid_side;
    out.plan.kept = ps.kept;
    const std::size_t full = static_cast<std::size_t>(grid_side) * grid_side;
    out.plan.mask_ratio = full == 0 ? 0.0 : 1.0 - static_cast<double>(ps.kept.size()) / full;
    out.grid.grid_side = grid_side;
    out.grid.patch_side = ps.patch_side;
    out.grid.channels = ps.channels;
    out.grid.patches = Matrix::Zero(static_cast<Eigen::Index>(full), static_cast<Eigen::Index>(dim));
    for (std::size_t k = 0; k < ps.kept.size(); ++k) {
        const auto& idx = ps.kept[k];
        if (idx.row >= grid_side || idx.col >= grid_side)
            throw CorruptionError("exemplar patch index outside grid", 0);
        const int row = idx.row * grid_side + idx.col;
        for (std::size_t j = 0; j < dim; ++j)
            out.grid.patches(row, static_cast<Eigen::Index>(j)) = dequantize_pixel(ps.pixels[k * dim + j]);
    }
    return out;
}

void write_patch_set(const PatchSet& ps, std::vector<std::uint8_t>& out) {
    out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
    put_u8(out, kPatchSetVersion);
    put_u16(out, ps.image_side);
    put_u8(out, ps.patch_side);
    put_u8(out, ps.channels);
    put_u16(out, static_cast<std::uint16_t>(ps.kept.size()));
    put_u16(out, ps.label);
    for (const auto& idx : ps.kept) {
        put_u8(out, static_cast<std::uint8_t>(idx.row));
        put_u8(out, static_cast<std::uint8_t>(idx.col));
    }
    out.insert(out.end(), ps.pixels.begin(), ps.pixels.end());
}

PatchSet read_patch_set(std::span<const std::uint8_t> bytes, std::size_t& offset) {
    const std::size_t start = offset;
    Reader in(bytes, offset);
    auto magic = in.take(4, "magic");
    if (!std::equal(magic.begin(), magic.end(), std::begin(kMagic)))
        throw CorruptionError("bad exemplar magic", start);
    const std::size_t version_at = in.offset();
    if (in.u8("version") != kPatchSetVersion)
        throw CorruptionError("unsupported exemplar version", version_at);

    PatchSet ps;
    const std::size_t geometry_at = in.offset();
    ps.image_side = in.u16("image side");
    ps.patch_side = in.u8("patch side");
    ps.channels = in.u8("channels");
    const std::uint16_t n = in.u16("patch count");
    ps.label = in.u16("label");
    if (ps.patch_side == 0 || ps.channels == 0 || ps.image_side % ps.patch_side != 0)
        throw CorruptionError("inconsistent exemplar geometry", geometry_at);
    const int grid_side = ps.image_side / ps.patch_side;
    if (static_cast<std::size_t>(n) > static_cast<std::size_t>(grid_side) * grid_side)
        throw CorruptionError("patch count exceeds grid size", geometry_at);

    ps.kept.reserve(n);
    for (std::uint16_t k = 0; k < n; ++k) {
        const std::size_t at = in.offset();
        const int r = in.u8("patch index");
        const int c = in.u8("patch index");
        if (r >= grid_side || c >= grid_side)
            throw CorruptionError("patch index outside grid", at);
        ps.kept.push_back({r, c});
    }
    auto pixels = in.take(static_cast<std::size_t>(n) * ps.patch_dim(), "pixel payload");
    ps.pixels.assign(pixels.begin(), pixels.end());
    return ps;
}

std::vector<std::uint8_t> serialize(const PatchSet& ps) {
    std::vector<std::uint8_t> out;
    out.reserve(ps.serialized_bytes());
    write_patch_set(ps, out);
    return out;
}

} // namespace bmae
