// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The bmae Authors

#include <cmath>
#include <fstream>
#include <set>

#include "bmae/exemplar_store.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace bmae;
using bmae::testing::random_image;
using bmae::testing::TempDir;

namespace {

std::vector<ImageTensor> images(int n, int side, Rng& rng) {
    std::vector<ImageTensor> out;
    for (int i = 0; i < n; ++i)
        out.push_back(random_image(3, side, rng));
    return out;
}

// Counts how many records of `payload` bytes fit into `allowance` by adding
// them one at a time.
std::size_t fit_by_counting(std::uint64_t allowance, std::uint64_t payload) {
    std::size_t n = 0;
    std::uint64_t used = 0;
    while (used + payload <= allowance) {
        used += payload;
        ++n;
    }
    return n;
}

} // namespace

TEST_CASE("per-class quota splits the budget evenly") {
    ExemplarStore store(10000);
    CHECK(store.per_class_quota(100, 4) == 25);
    CHECK(store.per_class_quota(300, 4) == 8);
    CHECK(store.per_class_quota(100, 0) == 0);
    CHECK_THROWS_AS(store.per_class_quota(0, 4), InvalidArgument);
}

TEST_CASE("masking 75% of patches stores exactly four times as many exemplars") {
    Rng rng(1);
    const auto pool = images(100, 32, rng);
    const std::uint64_t budget = budget_for_images(20, 1, 3, 32);
    ExemplarStore full(budget), masked(budget);
    CHECK(full.admit_class(0, pool, 0.0, 4, rng) == 20);
    CHECK(masked.admit_class(0, pool, 0.75, 4, rng) == 80);
    CHECK(masked.entry_count() == 4 * full.entry_count());
    CHECK(full.used_bytes() == budget);
    CHECK(masked.used_bytes() == budget);
}

TEST_CASE("90% masking of a 10x10 grid holds 200 exemplars in a 20-image budget") {
    Rng rng(2);
    const auto pool = images(250, 40, rng);
    const std::uint64_t budget = budget_for_images(20, 1, 3, 40);
    const std::uint64_t payload = 10 * 4 * 4 * 3;
    ExemplarStore store(budget);
    const std::size_t stored = store.admit_class(0, pool, 0.9, 4, rng);
    CHECK(stored == fit_by_counting(budget, payload));
    CHECK(stored == 200);
}

TEST_CASE("admitting a new class shrinks existing classes to the new quota") {
    Rng rng(3);
    const std::uint64_t budget = budget_for_images(10, 1, 3, 16);
    ExemplarStore store(budget);
    const auto a = images(60, 16, rng);
    const auto b = images(60, 16, rng);
    const auto c = images(60, 16, rng);
    store.admit_class(0, a, 0.75, 4, rng);
    CHECK(store.entries(0).size() == 40);
    store.admit_class(1, b, 0.75, 4, rng);
    CHECK(store.entries(0).size() == 20);
    CHECK(store.entries(1).size() == 20);
    store.admit_class(2, c, 0.75, 4, rng);
    for (int cls : {0, 1, 2})
        CHECK(store.entries(cls).size() == 13);
    CHECK(store.used_bytes() <= store.budget_bytes());
    CHECK_THROWS_AS(store.admit_class(1, b, 0.75, 4, rng), InvalidArgument);
}

TEST_CASE("rebalancing drops entries uniformly at random") {
    // Each of 8 original entries survives a shrink to 2 with probability 1/4.
    const int trials = 4000;
    std::vector<int> survived(8, 0);
    std::vector<ImageTensor> pool;
    for (int i = 0; i < 8; ++i) {
        ImageTensor img(1, 4);
        img.pixels()[0] = i / 255.0; // tags the entry
        pool.push_back(img);
    }
    for (int t = 0; t < trials; ++t) {
        Rng rng(1000 + t);
        ExemplarStore store(8 * 16);
        store.admit_class(0, pool, 0.0, 4, rng);
        REQUIRE(store.entries(0).size() == 8);
        store.reserve_classes(4, rng);
        REQUIRE(store.entries(0).size() == 2);
        for (const auto& ps : store.entries(0))
            ++survived[ps.pixels[0]];
    }
    const double mean = trials * 0.25;
    const double sigma = std::sqrt(trials * 0.25 * 0.75);
    for (int s : survived)
        CHECK(std::abs(s - mean) < 4 * sigma);
}

TEST_CASE("zero budget stores nothing and reports zero usage") {
    Rng rng(4);
    ExemplarStore store(0);
    CHECK(store.admit_class(0, images(5, 8, rng), 0.75, 4, rng) == 0);
    CHECK(store.used_bytes() == 0);
    CHECK(store.empty());
    CHECK(store.contains(0));
}

TEST_CASE("replay iteration yields every entry once") {
    Rng rng(5);
    ExemplarStore store(budget_for_images(4, 2, 3, 8));
    store.admit_class(0, images(10, 8, rng), 0.5, 4, rng);
    store.admit_class(1, images(10, 8, rng), 0.5, 4, rng);
    const auto order = store.iterate_for_replay(rng);
    CHECK(order.size() == store.entry_count());
    CHECK(std::set<const PatchSet*>(order.begin(), order.end()).size() == order.size());
}

TEST_CASE("candidate selection draws distinct indices and caps at the pool") {
    Rng rng(6);
    const auto picks = candidate_selection(10, 4, rng);
    CHECK(picks.size() == 4);
    CHECK(std::set<std::size_t>(picks.begin(), picks.end()).size() == 4);
    for (auto p : picks)
        CHECK(p < 10);
    CHECK(candidate_selection(3, 10, rng).size() == 3);
}

TEST_CASE("stores round-trip through files and validate their bytes") {
    Rng rng(7);
    TempDir dir("store");
    ExemplarStore store(budget_for_images(5, 2, 3, 8));
    store.admit_class(3, images(12, 8, rng), 0.75, 2, rng);
    store.admit_class(8, images(12, 8, rng), 0.75, 2, rng);
    const auto path = dir.path() / "s.bin";
    store.save(path);
    const ExemplarStore loaded = ExemplarStore::load(path);
    CHECK(loaded == store);
    CHECK(loaded.serialize() == store.serialize());

    auto bytes = store.serialize();
    CHECK(validate_store_bytes(bytes).ok);
    bytes[kStoreHeaderBytes + 4] = 9; // version byte of the first record
    const StoreValidation v = validate_store_bytes(bytes);
    CHECK_FALSE(v.ok);
    CHECK(v.failure_offset == kStoreHeaderBytes + 4);
    bytes = store.serialize();
    bytes.push_back(0);
    CHECK_FALSE(validate_store_bytes(bytes).ok);
    CHECK(validate_store_bytes(std::vector<std::uint8_t>{'B', 'M'}).failure_offset == 2);
}

TEST_CASE("inspect reports accounting, multiplier and validation") {
    Rng rng(8);
    TempDir dir("inspect");
    ExemplarStore store(budget_for_images(20, 1, 3, 32));
    store.admit_class(0, images(80, 32, rng), 0.75, 4, rng);
    store.save(dir.path() / "fresh.bin");
    const std::string report = inspect_store(dir.path() / "fresh.bin");
    CHECK(report.find("format: valid") != std::string::npos);
    CHECK(report.find("class 0: 80 exemplars") != std::string::npos);
    CHECK(report.find("4\xC3\x97 exemplar multiplier") != std::string::npos);
    CHECK(report.find("(100.00% of budget)") != std::string::npos);

    ExemplarStore(1000).save(dir.path() / "empty.bin");
    const std::string empty = inspect_store(dir.path() / "empty.bin");
    CHECK(empty.find("used_bytes: 0 ") != std::string::npos);
    CHECK(empty.find("entries: 0") != std::string::npos);

    auto bytes = store.serialize();
    bytes[kStoreHeaderBytes + kPatchSetHeaderBytes] ^= 0xFF; // first row index of record 0
    {
        std::ofstream out(dir.path() / "bad.bin", std::ios::binary);
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    }
    const std::string bad = inspect_store(dir.path() / "bad.bin");
    CHECK(bad.find("format: INVALID at offset") != std::string::npos);
}
