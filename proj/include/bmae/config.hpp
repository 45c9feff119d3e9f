// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The bmae Authors

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bmae/frequency.hpp"
#include "bmae/losses.hpp"
#include "bmae/model.hpp"

namespace bmae {

struct DatasetConfig {
    /// "synthetic" or "cifar100".
    std::string id = "synthetic";
    std::string path;
    int classes = 10;
    int side = 32;
    int train_per_class = 100;
    int test_per_class = 50;
    std::uint64_t seed = 0;
    bool operator==(const DatasetConfig&) const = default;
};

struct TrainConfig {
    /// Patch masking ratio of training inputs.
    double mask_ratio = 0.75;
    /// Coarse and fine ratios of the two detached reconstructions that
    /// supervise the detailed branch.
    double coarse_mask_ratio = 0.75;
    double fine_mask_ratio = 0.4;
    int epochs = 20;
    int batch_size = 64;
    double lr = 1e-4;
    /// Draw half of every batch from replay images when any exist.
    bool balanced_batches = false;
    bool augment = true;
    int augment_pad = 4;
    /// Reconstruction loss on masked patches only (original MAE recipe).
    bool rec_masked_only = false;
    bool operator==(const TrainConfig&) const = default;
};

struct StoreConfig {
    double mask_ratio = 0.75;
    /// Budget expressed as full images per class of the whole stream.
    int images_per_class = 20;
    /// Explicit byte budget; negative derives it from images_per_class.
    std::int64_t budget_bytes = -1;
    bool operator==(const StoreConfig&) const = default;
};

struct EvalConfig {
    /// 0 feeds every patch to the classifier at test time.
    double mask_ratio = 0.0;
    /// Test images per class used for the replay reconstruction error.
    int replay_samples_per_class = 10;
    /// Test images per class used for feature density after the last task;
    /// 0 disables it.
    int density_samples_per_class = 20;
    bool operator==(const EvalConfig&) const = default;
};

struct ExperimentConfig {
    std::string name = "experiment";
    std::uint64_t seed = 0;
    DatasetConfig dataset;
    int tasks = 5;
    std::uint64_t class_order_seed = 1993;
    TrainConfig train;
    ModelConfig model;
    LossWeights loss;
    FrequencyMaskSpec freq;
    StoreConfig store;
    EvalConfig eval;
    bool checkpoints = true;

    /// Runs every per-module validation; throws ConfigError.
    void validate() const;
    bool operator==(const ExperimentConfig&) const = default;
};

/// Every recognised key, in canonical order.
const std::vector<std::string>& config_keys();

/// Sets one dotted key from its textual value. Throws ConfigError for
/// unknown keys and malformed values.
void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value);
std::string get_config_value(const ExperimentConfig& config, const std::string& key);

/// Parses `key = value` lines; '#' starts a comment. Later lines override
/// earlier ones. Does not validate cross-field consistency.
ExperimentConfig parse_config(const std::string& text, ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical text with every key; parse_config(to_text(c)) == c.
std::string to_text(const ExperimentConfig& config);

/// Applies "key=value" override strings.
void apply_overrides(ExperimentConfig& config, const std::vector<std::string>& overrides);

} // namespace bmae
