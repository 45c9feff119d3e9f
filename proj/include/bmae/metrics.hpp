// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The bmae Authors

#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <vector>

#include "bmae/losses.hpp"

namespace bmae {

struct StepRecord {
    std::size_t step = 0;
    int task = 0;
    LossReport loss;

    bool operator==(const StepRecord&) const = default;
};

/// Accuracy bookkeeping of one experiment. acc[t][k] is the accuracy on the
/// test classes of task k after training task t (k <= t).
struct MetricsLedger {
    std::vector<std::vector<double>> acc;
    /// Test images per task; weights tasks when forming overall accuracy.
    /// Empty means equal weights.
    std::vector<std::size_t> test_counts;
    std::vector<double> wall_seconds;
    /// Mean squared error of replay-style reconstructions after each task.
    std::vector<double> replay_mse;
    std::vector<StepRecord> steps;
    std::optional<double> feature_density;

    int phases() const noexcept { return static_cast<int>(acc.size()); }
    /// Throws InvalidArgument unless acc is non-empty, lower-triangular and
    /// every entry lies in [0, 1].
    void validate() const;
    bool operator==(const MetricsLedger&) const = default;
};

/// Overall accuracy over all classes seen through phase t (task-size weighted).
double phase_accuracy(const MetricsLedger& ledger, int t);
/// Mean over phases of phase_accuracy.
double avg_accuracy(const MetricsLedger& ledger);
/// phase_accuracy of the final phase.
double last_accuracy(const MetricsLedger& ledger);
/// Average forgetting: mean over k < T of max_{k <= t <= T} acc[t][k] - acc[T][k].
/// Zero for a single phase.
double forgetting(const MetricsLedger& ledger);

/// Ratio of mean within-class to mean between-class pairwise cosine
/// similarity. Throws InvalidArgument for zero vectors, fewer than two
/// classes or two samples per class, or a zero between-class mean.
double feature_density(const std::vector<std::vector<double>>& features, const std::vector<int>& labels);

/// Writes accuracy_matrix.csv, phase_metrics.csv, metrics.csv, losses.csv
/// and accuracy.ppm into `dir`. Re-emitting the same ledger is idempotent.
void emit_reports(const MetricsLedger& ledger, const std::filesystem::path& dir);

/// Reads the CSV files back. Doubles are written with round-trip precision,
/// so metrics recomputed from the result are bit-identical.
MetricsLedger load_reports(const std::filesystem::path& dir);

} // namespace bmae
