// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The bmae Authors

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "bmae/engine.hpp"

namespace bmae {

/// Little-endian keyed container: magic "BMCK", version, resolved config
/// text, finished task count, classifier size, named parameter matrices,
/// the serialized exemplar store and the metrics ledger. Doubles are stored
/// bit-exactly, so a restored state continues identically.
std::vector<std::uint8_t> serialize_state(const TrainingState& state);
TrainingState deserialize_state(std::span<const std::uint8_t> bytes);

/// Writes through a temporary file and renames, so a crash never leaves a
/// truncated checkpoint behind.
void save_checkpoint(const TrainingState& state, const std::filesystem::path& path);
TrainingState load_checkpoint(const std::filesystem::path& path);

inline constexpr std::uint8_t kCheckpointVersion = 1;

} // namespace bmae
