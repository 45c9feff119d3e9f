// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The bmae Authors

#include "bmae/exemplar_store.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace bmae {

namespace {

constexpr std::uint8_t kStoreMagic[4] = {'B', 'M', 'S', 'T'};

void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i)
        out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_le(std::span<const std::uint8_t> bytes, std::size_t at, int n) {
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i)
        v |= static_cast<std::uint64_t>(bytes[at + i]) << (8 * i);
    return v;
}

struct StoreHeader {
    std::uint64_t budget = 0;
    std::uint32_t count = 0;
};

StoreHeader read_header(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kStoreHeaderBytes)
        throw CorruptionError("truncated store header", bytes.size());
    if (!std::equal(kStoreMagic, kStoreMagic + 4, bytes.begin()))
        throw CorruptionError("bad store magic", 0);
    if (bytes[4] != kStoreVersion)
        throw CorruptionError("unsupported store version", 4);
    StoreHeader h;
    h.budget = get_le(bytes, 5, 8);
    h.count = static_cast<std::uint32_t>(get_le(bytes, 13, 4));
    return h;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace

ExemplarStore::ExemplarStore(std::uint64_t budget_bytes) : budget_bytes_(budget_bytes) {}

std::uint64_t ExemplarStore::overhead_bytes() const noexcept {
    std::uint64_t total = 0;
    for (const auto& [cls, list] : entries_)
        for (const auto& ps : list)
            total += kPatchSetHeaderBytes + ps.index_bytes();
    return total;
}

std::size_t ExemplarStore::entry_count() const noexcept {
    std::size_t n = 0;
    for (const auto& [cls, list] : entries_)
        n += list.size();
    return n;
}

std::vector<int> ExemplarStore::classes() const {
    std::vector<int> out;
    for (const auto& [cls, list] : entries_)
        out.push_back(cls);
    return out;
}

std::span<const PatchSet> ExemplarStore::entries(int class_id) const {
    auto it = entries_.find(class_id);
    if (it == entries_.end())
        return {};
    return it->second;
}

std::size_t ExemplarStore::per_class_quota(std::size_t payload_bytes, std::size_t class_total) const {
    if (payload_bytes == 0)
        throw InvalidArgument("exemplar payload is empty; mask ratio keeps no patches");
    if (class_total == 0)
        return 0;
    const std::uint64_t allowance = budget_bytes_ / class_total;
    return static_cast<std::size_t>(allowance / payload_bytes);
}

void ExemplarStore::reserve_classes(std::size_t class_total, Rng& rng) {
    if (class_total < entries_.size())
        throw InvalidArgument("cannot partition the budget over fewer classes than are stored");
    partitions_ = class_total;
    for (auto& [cls, list] : entries_) {
        if (list.empty())
            continue;
        const std::size_t quota = per_class_quota(list.front().payload_bytes(), class_total);
        if (list.size() <= quota)
            continue;
        // Keep a uniformly random subset, preserving the original order.
        std::vector<std::size_t> idx(list.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(quota);
        std::sort(idx.begin(), idx.end());
        std::vector<PatchSet> kept;
        kept.reserve(quota);
        for (std::size_t i : idx)
            kept.push_back(std::move(list[i]));
        list = std::move(kept);
    }
    used_bytes_ = 0;
    for (const auto& [cls, list] : entries_)
        for (const auto& ps : list)
            used_bytes_ += ps.payload_bytes();
    check_invariants();
}

std::size_t ExemplarStore::admit_class(int class_id, std::span<const ImageTensor> candidates,
                                       double mask_ratio, int patch_side, Rng& rng) {
    if (contains(class_id))
        throw InvalidArgument("class " + std::to_string(class_id) + " already admitted");
    if (candidates.empty()) {
        entries_[class_id];
        if (partitions_ < entries_.size())
            reserve_classes(entries_.size(), rng);
        return 0;
    }
    const ImageTensor& first = candidates.front();
    if (patch_side <= 0 || first.side() % patch_side != 0)
        throw DimensionError("admit_class: image side not divisible by patch side");
    const int grid_side = first.side() / patch_side;
    const std::size_t kept = kept_patch_count(static_cast<std::size_t>(grid_side) * grid_side, mask_ratio);
    const std::size_t payload = kept * static_cast<std::size_t>(patch_side) * patch_side * first.channels();

    if (partitions_ < entries_.size() + 1)
        reserve_classes(entries_.size() + 1, rng);
    const std::size_t quota = per_class_quota(payload, partitions_);

    auto picks = candidate_selection(candidates.size(), quota, rng);
    auto& list = entries_[class_id];
    list.reserve(picks.size());
    for (std::size_t i : picks) {
        const MaskPlan plan = sample_mask(grid_side, mask_ratio, rng);
        list.push_back(encode_exemplar(candidates[i], plan, class_id));
        used_bytes_ += list.back().payload_bytes();
    }
    check_invariants();
    return picks.size();
}

std::vector<const PatchSet*> ExemplarStore::iterate_for_replay(Rng& rng) const {
    std::vector<const PatchSet*> out;
    out.reserve(entry_count());
    for (const auto& [cls, list] : entries_)
        for (const auto& ps : list)
            out.push_back(&ps);
    std::shuffle(out.begin(), out.end(), rng);
    return out;
}

void ExemplarStore::check_invariants() const {
    std::uint64_t used = 0;
    for (const auto& [cls, list] : entries_)
        for (const auto& ps : list)
            used += ps.payload_bytes();
    if (used != used_bytes_ || used_bytes_ > budget_bytes_)
        throw Error("exemplar store accounting invariant violated");
}

std::vector<std::uint8_t> ExemplarStore::serialize() const {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), std::begin(kStoreMagic), std::end(kStoreMagic));
    out.push_back(kStoreVersion);
    put_le(out, budget_bytes_, 8);
    put_le(out, entry_count(), 4);
    for (const auto& [cls, list] : entries_)
        for (const auto& ps : list)
            write_patch_set(ps, out);
    return out;
}

ExemplarStore ExemplarStore::deserialize(std::span<const std::uint8_t> bytes) {
    const StoreHeader h = read_header(bytes);
    ExemplarStore store(h.budget);
    std::size_t offset = kStoreHeaderBytes;
    for (std::uint32_t i = 0; i < h.count; ++i) {
        PatchSet ps = read_patch_set(bytes, offset);
        store.used_bytes_ += ps.payload_bytes();
        store.entries_[ps.label].push_back(std::move(ps));
    }
    if (offset != bytes.size())
        throw CorruptionError("trailing bytes after last exemplar record", offset);
    if (store.used_bytes_ > store.budget_bytes_)
        throw CorruptionError("stored payload exceeds the declared budget", 5);
    store.partitions_ = store.entries_.size();
    return store;
}

void ExemplarStore::restore_partitions(std::span<const int> admitted, std::size_t partitions) {
    for (int cls : admitted)
        entries_[cls];
    if (partitions < entries_.size())
        throw InvalidArgument("partition count below the number of admitted classes");
    partitions_ = partitions;
    check_invariants();
}

void ExemplarStore::save(const std::filesystem::path& path) const {
    const auto bytes = serialize();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw IoError("write failed for " + path.string());
}

ExemplarStore ExemplarStore::load(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    return deserialize(bytes);
}

std::vector<std::size_t> candidate_selection(std::size_t pool_size, std::size_t quota, Rng& rng) {
    if (quota > pool_size) {
        log_warn("exemplar quota " + std::to_string(quota) + " exceeds class size " +
                 std::to_string(pool_size) + "; storing every candidate");
        quota = pool_size;
    }
    std::vector<std::size_t> idx(pool_size);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < quota; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool_size - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(quota);
    return idx;
}

std::uint64_t budget_for_images(std::size_t images_per_class, std::size_t class_total, int channels,
                                int image_side) {
    return static_cast<std::uint64_t>(images_per_class) * class_total * channels *
           static_cast<std::uint64_t>(image_side) * image_side;
}

StoreValidation validate_store_bytes(std::span<const std::uint8_t> bytes) {
    StoreValidation v;
    try {
        (void)ExemplarStore::deserialize(bytes);
    } catch (const CorruptionError& e) {
        v.ok = false;
        v.message = e.what();
        v.failure_offset = e.offset();
    }
    return v;
}

std::string inspect_store(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    std::ostringstream os;
    os << "store: " << path.string() << "\n";
    os << "file_bytes: " << bytes.size() << "\n";
    const StoreValidation v = validate_store_bytes(bytes);
    if (!v.ok) {
        os << "format: INVALID at offset " << v.failure_offset << ": " << v.message << "\n";
        return os.str();
    }
    os << "format: valid\n";
    const ExemplarStore store = ExemplarStore::deserialize(bytes);
    const double pct = store.budget_bytes() == 0
                           ? 0.0
                           : 100.0 * static_cast<double>(store.used_bytes()) /
                                 static_cast<double>(store.budget_bytes());
    char pct_buf[32];
    std::snprintf(pct_buf, sizeof pct_buf, "%.2f", pct);
    os << "budget_bytes: " << store.budget_bytes() << "\n";
    os << "used_bytes: " << store.used_bytes() << " (" << pct_buf << "% of budget)\n";
    os << "overhead_bytes: " << store.overhead_bytes() << "\n";
    os << "classes: " << store.class_count() << "\n";
    os << "entries: " << store.entry_count() << "\n";
    std::size_t kept_total = 0;
    std::size_t full_total = 0;
    for (const auto& [cls, list] : store.all_entries()) {
        std::uint64_t payload = 0;
        for (const auto& ps : list) {
            payload += ps.payload_bytes();
            kept_total += ps.kept.size();
            const std::size_t grid = ps.image_side / ps.patch_side;
            full_total += grid * grid;
        }
        os << "class " << cls << ": " << list.size() << " exemplars, " << payload << " bytes\n";
    }
    if (kept_total > 0) {
        const double multiplier = static_cast<double>(full_total) / static_cast<double>(kept_total);
        char buf[32];
        std::snprintf(buf, sizeof buf, "%g", multiplier);
        os << buf << "\xC3\x97 exemplar multiplier (full-image patches per stored patch)\n";
    }
    return os.str();
}

} // namespace bmae
