// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The bmae Authors

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "bmae/config.hpp"
#include "bmae/dataset.hpp"
#include "bmae/exemplar_store.hpp"
#include "bmae/metrics.hpp"
#include "bmae/model.hpp"
#include "bmae/optim.hpp"

namespace bmae {

/// Decodes one stored exemplar through the model (no further masking) and
/// pastes the stored patches back, so visible pixels equal the dequantized
/// stored values exactly.
ImageTensor reconstruct_exemplar(const PatchSet& exemplar, const BilateralModel& model,
                                 const FrequencyFilter& filter);

/// One replay image per stored exemplar, in class then storage order.
std::vector<LabeledImage> reconstruct_old_samples(const ExemplarStore& store, const BilateralModel& model,
                                                  const FrequencyFilter& filter);

/// Draws `batch_size` distinct items uniformly from the concatenation
/// replay ++ current (fewer if the union is smaller). With `balanced`, half
/// of the batch comes from each source while both are non-empty. Throws
/// InvalidArgument when both sources are empty.
std::vector<const LabeledImage*> sample_batch(std::span<const LabeledImage> replay,
                                              std::span<const LabeledImage> current, int batch_size, Rng& rng,
                                              bool balanced = false);

struct DetachedPair {
    Matrix coarse; // x^1, (C, S*S)
    Matrix fine;   // x^2
};

/// Main-branch reconstructions of `image` under two independent masks of
/// ratios r1 and r2, computed without recording a graph.
DetachedPair mask_and_reconstruct(const ImageTensor& image, double r1, double r2, const BilateralModel& model,
                                  Rng& rng);

/// Loss of one training sample, built on a recording graph.
struct SampleLoss {
    ad::Var total;
    double cls = 0, rec = 0, det = 0;
};

SampleLoss sample_loss(ParamBinding& binding, const BilateralModel& model,
                       const LabeledImage& item, const TrainConfig& train, const LossWeights& weights,
                       const FrequencyFilter& filter, Rng& rng);

/// Accumulates the batch-mean gradient into `grads` and returns the mean
/// loss terms. Throws NonFiniteLoss before any parameter changes.
LossReport batch_gradient(const BilateralModel& model, std::span<const LabeledImage* const> batch,
                          const TrainConfig& train, const LossWeights& weights, const FrequencyFilter& filter,
                          GradientBuffer& grads, Rng& rng, const std::vector<bool>* frozen = nullptr);

/// Fraction of `items` whose argmax logit equals the label.
double classification_accuracy(const BilateralModel& model, std::span<const LabeledImage> items,
                               double mask_ratio, Rng& rng);

/// Mean squared error between images and their replay reconstructions after
/// encoding at `mask_ratio`.
double replay_reconstruction_mse(const BilateralModel& model, std::span<const LabeledImage> items,
                                 double mask_ratio, const FrequencyFilter& filter, Rng& rng);

/// Independent RNG stream for (seed, purpose, index).
Rng derive_rng(std::uint64_t seed, std::uint64_t purpose, std::uint64_t index);

/// Builds the dataset described by the config. Throws ConfigError when a
/// dataset path is missing.
Dataset load_dataset(const DatasetConfig& config);

/// Everything needed to continue an experiment after a finished task.
struct TrainingState {
    ExperimentConfig config;
    int tasks_done = 0;
    std::unique_ptr<BilateralModel> model;
    ExemplarStore store;
    MetricsLedger ledger;
};

/// The class-incremental task loop.
class Experiment {
public:
    Experiment(ExperimentConfig config, TaskStream stream);
    /// Continues from a saved state; the stream must match its config.
    Experiment(TrainingState state, TaskStream stream);

    const ExperimentConfig& config() const noexcept { return state_.config; }
    const TaskStream& stream() const noexcept { return stream_; }
    const BilateralModel& model() const noexcept { return *state_.model; }
    BilateralModel& model() noexcept { return *state_.model; }
    const ExemplarStore& store() const noexcept { return state_.store; }
    const MetricsLedger& ledger() const noexcept { return state_.ledger; }
    const FrequencyFilter& filter() const noexcept { return filter_; }
    int tasks_done() const noexcept { return state_.tasks_done; }
    const TrainingState& state() const noexcept { return state_; }

    /// Budget in bytes under the current config.
    std::uint64_t budget_bytes() const;

    /// Trains the next task, admits its classes into the store and fills one
    /// accuracy row.
    void train_next_task();
    /// Accuracy on the test split of every task trained so far.
    std::vector<double> evaluate() const;

    /// Called after every optimizer step.
    std::function<void(const StepRecord&)> on_step;

private:
    void finish_task(int t, double seconds);

    TrainingState state_;
    TaskStream stream_;
    FrequencyFilter filter_;
};

/// Runs (or resumes) an experiment into `out_dir`:
///   config.resolved.cfg   resolved configuration
///   checkpoints/task_N.ckpt   state after task N
///   store.bin             exemplar store after the last task
///   reports/              CSV reports and the accuracy plot
/// All configuration and dataset checks happen before anything is written.
MetricsLedger run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                             bool resume = false);

/// Latest checkpoint in `out_dir`, or an empty path.
std::filesystem::path latest_checkpoint(const std::filesystem::path& out_dir);

/// Re-evaluates a checkpoint on the test split of every task it has seen.
std::vector<double> evaluate_checkpoint(const std::filesystem::path& checkpoint);

/// Writes one PPM per stored exemplar, reconstructed with the checkpoint's
/// model, as class_<label>_<index>.ppm. Returns the number written.
std::size_t reconstruct_store_images(const std::filesystem::path& store_path,
                                     const std::filesystem::path& checkpoint,
                                     const std::filesystem::path& out_dir);

} // namespace bmae
