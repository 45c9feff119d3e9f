// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The bmae Authors

#include <algorithm>
#include <cmath>
#include <set>

#include "bmae/patch_codec.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace bmae;
using bmae::testing::random_image;

TEST_CASE("kept patch count floors the visible share") {
    CHECK(kept_patch_count(196, 0.75) == 49);
    CHECK(kept_patch_count(64, 0.75) == 16);
    CHECK(kept_patch_count(64, 0.0) == 64);
    CHECK(kept_patch_count(100, 0.9) == 10);
    CHECK(kept_patch_count(10, 0.55) == 4);
    // Brute-force oracle: largest k with k <= N (1 - r), using exact rationals
    // r = a / 100.
    for (int n = 1; n <= 80; ++n)
        for (int a = 0; a < 100; ++a) {
            int k = 0;
            while ((k + 1) * 100 <= n * (100 - a))
                ++k;
            CHECK(kept_patch_count(n, a / 100.0) == static_cast<std::size_t>(k));
        }
}

TEST_CASE("224 px exemplar at 75% masking costs 36.75 KB of pixels and 98 index bytes") {
    Rng rng(7);
    const ImageTensor img = random_image(3, 224, rng);
    const MaskPlan plan = sample_mask(14, 0.75, rng);
    const PatchSet ps = encode_exemplar(img, plan, 3);
    CHECK(ps.kept.size() == 49);
    CHECK(ps.payload_bytes() == 37632);
    CHECK(ps.payload_bytes() / 1024.0 == 36.75);
    CHECK(ps.index_bytes() == 98);
    CHECK(ps.serialized_bytes() == kPatchSetHeaderBytes + 98 + 37632);
    CHECK(serialize(ps).size() == ps.serialized_bytes());
}

TEST_CASE("patchify lays out rows by grid position and pixels as (py, px, channel)") {
    Rng rng(1);
    const ImageTensor img = random_image(3, 12, rng);
    const PatchGrid grid = patchify(img, 4);
    REQUIRE(grid.grid_side == 3);
    REQUIRE(grid.patches.rows() == 9);
    REQUIRE(grid.patches.cols() == 48);
    for (int gy = 0; gy < 3; ++gy)
        for (int gx = 0; gx < 3; ++gx)
            for (int py = 0; py < 4; ++py)
                for (int px = 0; px < 4; ++px)
                    for (int c = 0; c < 3; ++c)
                        CHECK(grid.patches(gy * 3 + gx, (py * 4 + px) * 3 + c) ==
                              img.at(c, gy * 4 + py, gx * 4 + px));
    CHECK(unpatchify(grid) == img);
    CHECK_THROWS_AS(patchify(img, 5), DimensionError);
}

TEST_CASE("sample_mask returns sorted distinct in-grid positions") {
    Rng rng(3);
    for (double r : {0.0, 0.25, 0.5, 0.75, 0.9}) {
        const MaskPlan plan = sample_mask(8, r, rng);
        CHECK(plan.kept.size() == kept_patch_count(64, r));
        CHECK(std::is_sorted(plan.kept.begin(), plan.kept.end()));
        std::set<PatchIndex> unique(plan.kept.begin(), plan.kept.end());
        CHECK(unique.size() == plan.kept.size());
        for (const auto& k : plan.kept) {
            CHECK(k.row >= 0);
            CHECK(k.row < 8);
            CHECK(k.col >= 0);
            CHECK(k.col < 8);
        }
    }
    CHECK_THROWS_AS(sample_mask(8, 1.0, rng), InvalidArgument);
    CHECK_THROWS_AS(sample_mask(8, -0.1, rng), InvalidArgument);
}

TEST_CASE("sample_mask keeps every position with equal probability") {
    Rng rng(11);
    const int trials = 20000;
    std::vector<int> hits(16, 0);
    for (int t = 0; t < trials; ++t)
        for (const auto& k : sample_mask(4, 0.75, rng).kept)
            ++hits[k.row * 4 + k.col];
    // Each position is kept with probability 4/16; binomial 3-sigma band.
    const double p = 0.25;
    const double mean = trials * p;
    const double sigma = std::sqrt(trials * p * (1 - p));
    for (int h : hits)
        CHECK(std::abs(h - mean) < 4 * sigma);
}

TEST_CASE("quantization error is at most half a level") {
    for (int i = 0; i <= 1000; ++i) {
        const double v = i / 1000.0;
        CHECK(std::abs(dequantize_pixel(quantize_pixel(v)) - v) <= 0.5 / 255.0 + 1e-12);
    }
    CHECK(quantize_pixel(-0.5) == 0);
    CHECK(quantize_pixel(2.0) == 255);
}

TEST_CASE("decode restores visible patches and zeroes the rest") {
    Rng rng(5);
    const ImageTensor img = random_image(3, 16, rng);
    const MaskPlan plan = sample_mask(4, 0.5, rng);
    const DecodedExemplar dec = decode_exemplar(encode_exemplar(img, plan, 9));
    CHECK(dec.label == 9);
    CHECK(dec.plan == MaskPlan{plan.kept, 0.5, 4});
    const PatchGrid original = patchify(img, 4);
    const auto visible = plan.visibility();
    for (int row = 0; row < 16; ++row)
        for (int j = 0; j < 48; ++j) {
            if (visible[row])
                CHECK(dec.grid.patches(row, j) == dequantize_pixel(quantize_pixel(original.patches(row, j))));
            else
                CHECK(dec.grid.patches(row, j) == 0.0);
        }
}

TEST_CASE("encode, decode, encode is byte identical") {
    Rng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        const int p = trial % 2 == 0 ? 4 : 2;
        const int side = p * (2 + trial % 5);
        const ImageTensor img = random_image(1 + trial % 3, side, rng);
        const PatchSet ps = encode_exemplar(img, sample_mask(side / p, 0.25 * (trial % 4), rng), trial);
        const DecodedExemplar dec = decode_exemplar(ps);
        const PatchSet again = encode_exemplar(unpatchify(dec.grid), dec.plan, dec.label);
        CHECK(serialize(again) == serialize(ps));
    }
}

TEST_CASE("serialized records read back and report corruption offsets") {
    Rng rng(2);
    const PatchSet ps = encode_exemplar(random_image(3, 8, rng), sample_mask(4, 0.5, rng), 1);
    const auto bytes = serialize(ps);
    std::size_t offset = 0;
    CHECK(read_patch_set(bytes, offset) == ps);
    CHECK(offset == bytes.size());

    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    offset = 0;
    try {
        read_patch_set(bad_magic, offset);
        FAIL("expected corruption");
    } catch (const CorruptionError& e) {
        CHECK(e.offset() == 0);
    }

    auto bad_index = bytes;
    bad_index[kPatchSetHeaderBytes] = 200; // first row index
    offset = 0;
    try {
        read_patch_set(bad_index, offset);
        FAIL("expected corruption");
    } catch (const CorruptionError& e) {
        CHECK(e.offset() == kPatchSetHeaderBytes);
    }

    const std::vector<std::uint8_t> truncated(bytes.begin(), bytes.end() - 1);
    offset = 0;
    CHECK_THROWS_AS(read_patch_set(truncated, offset), CorruptionError);
}

TEST_CASE("grids of 256 patches per side overflow the index byte") {
    ImageTensor img(1, 256);
    CHECK_THROWS_AS(encode_exemplar(img, full_plan(256), 0), OverflowError);
    CHECK_NOTHROW(encode_exemplar(ImageTensor(1, 255), MaskPlan{{{254, 254}}, 0.0, 255}, 0));
}
