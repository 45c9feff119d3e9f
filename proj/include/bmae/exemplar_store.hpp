// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The bmae Authors

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "bmae/image.hpp"
#include "bmae/patch_codec.hpp"

namespace bmae {

/// Byte-budgeted replay buffer of PatchSets, keyed by class.
///
/// The budget is charged in pixel-payload bytes (N * P * P * C per exemplar),
/// the same accounting under which 25% of the patches of 80 images occupy
/// the space of 20 full images. Per-record headers and index bytes are
/// reported separately as overhead. The budget is split equally over all
/// classes admitted so far; when a new class arrives existing classes are
/// shrunk by dropping uniformly random entries.
class ExemplarStore {
public:
    explicit ExemplarStore(std::uint64_t budget_bytes = 0);

    std::uint64_t budget_bytes() const noexcept { return budget_bytes_; }
    std::uint64_t used_bytes() const noexcept { return used_bytes_; }
    /// Record headers plus index bytes of all stored entries.
    std::uint64_t overhead_bytes() const noexcept;
    std::size_t entry_count() const noexcept;
    std::size_t class_count() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entry_count() == 0; }
    bool contains(int class_id) const { return entries_.count(class_id) != 0; }
    std::vector<int> classes() const;
    std::span<const PatchSet> entries(int class_id) const;
    const std::map<int, std::vector<PatchSet>>& all_entries() const noexcept { return entries_; }

    /// Exemplars of `payload_bytes` each that fit the per-class allowance
    /// when the budget is split over `class_total` classes.
    std::size_t per_class_quota(std::size_t payload_bytes, std::size_t class_total) const;

    /// Split the budget over `class_total` classes and drop entries of
    /// already stored classes beyond the new quota.
    void reserve_classes(std::size_t class_total, Rng& rng);

    /// Selects up to the per-class quota of `candidates`, masks each with a
    /// freshly seeded plan at `mask_ratio` and stores the resulting PatchSets.
    /// Returns the number stored. Throws InvalidArgument if the class was
    /// already admitted.
    std::size_t admit_class(int class_id, std::span<const ImageTensor> candidates,
                            double mask_ratio, int patch_side, Rng& rng);

    /// Every stored entry exactly once, shuffled with `rng`.
    std::vector<const PatchSet*> iterate_for_replay(Rng& rng) const;

    /// Number of classes the budget is currently split over.
    std::size_t partitions() const noexcept { return partitions_; }
    /// Restores bookkeeping the container format does not carry: classes
    /// admitted with zero entries and the partition count.
    void restore_partitions(std::span<const int> admitted, std::size_t partitions);

    std::vector<std::uint8_t> serialize() const;
    static ExemplarStore deserialize(std::span<const std::uint8_t> bytes);

    void save(const std::filesystem::path& path) const;
    static ExemplarStore load(const std::filesystem::path& path);

    bool operator==(const ExemplarStore&) const = default;

private:
    void check_invariants() const;

    std::uint64_t budget_bytes_ = 0;
    std::uint64_t used_bytes_ = 0;
    std::size_t partitions_ = 0;
    std::map<int, std::vector<PatchSet>> entries_;
};

/// Store container header: magic(4) version(1) budget(8) entry count(4).
inline constexpr std::size_t kStoreHeaderBytes = 17;
inline constexpr std::uint8_t kStoreVersion = 1;

/// Uniform selection of min(quota, pool_size) distinct indices, in draw
/// order. Logs a warning when the quota exceeds the pool.
std::vector<std::size_t> candidate_selection(std::size_t pool_size, std::size_t quota, Rng& rng);

/// Budget that holds `images_per_class` unmasked images for each of
/// `class_total` classes.
std::uint64_t budget_for_images(std::size_t images_per_class, std::size_t class_total,
                                int channels, int image_side);

/// Result of validating a store file without loading it into memory.
struct StoreValidation {
    bool ok = true;
    std::string message;
    std::uint64_t failure_offset = 0;
};

StoreValidation validate_store_bytes(std::span<const std::uint8_t> bytes);

/// Human-readable accounting report: per-class counts, byte usage against the
/// budget, exemplar multiplier and format validation.
std::string inspect_store(const std::filesystem::path& path);

} // namespace bmae
