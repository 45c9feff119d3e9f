// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The bmae Authors

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "bmae/image.hpp"

namespace bmae {

struct LabeledImage {
    ImageTensor image;
    int label = 0;
};

struct Dataset {
    int num_classes = 0;
    int channels = 3;
    int side = 0;
    std::vector<LabeledImage> train;
    std::vector<LabeledImage> test;
};

/// Parametric colored shapes on a noisy background. Class k draws shape
/// k mod 5 (disk, square, triangle, cross, ring) in a hue band centred at
/// k * 360 / num_classes degrees; position, size, color and background are
/// jittered per image.
struct SyntheticShapesSpec {
    int num_classes = 10;
    int side = 32;
    int train_per_class = 100;
    int test_per_class = 50;
};

Dataset make_synthetic_shapes(const SyntheticShapesSpec& spec, std::uint64_t seed);

/// Reads the standard CIFAR-100 binary distribution (train.bin / test.bin,
/// records of coarse label, fine label and 3072 pixel bytes) and uses the
/// fine labels.
Dataset load_cifar100(const std::filesystem::path& dir);

struct Task {
    int index = 0;
    std::vector<int> classes; // contiguous head indices
    std::vector<LabeledImage> train;
    std::vector<LabeledImage> test;
};

/// Ordered class-partitioned tasks. Labels are remapped so that the classes
/// of task t occupy head indices following those of tasks 0..t-1.
class TaskStream {
public:
    /// Throws ConfigError when tasks share a class.
    explicit TaskStream(std::vector<Task> tasks, std::vector<int> class_order = {});

    static TaskStream from_dataset(const Dataset& dataset, int task_count, std::uint64_t class_order_seed);

    int size() const noexcept { return static_cast<int>(tasks_.size()); }
    const Task& task(int t) const { return tasks_.at(t); }
    const std::vector<Task>& tasks() const noexcept { return tasks_; }
    /// class_order()[head index] = original dataset class id.
    const std::vector<int>& class_order() const noexcept { return class_order_; }
    int total_classes() const;

private:
    std::vector<Task> tasks_;
    std::vector<int> class_order_;
};

/// Random horizontal flip plus random crop from a zero-padded copy.
ImageTensor augment(const ImageTensor& image, int pad, Rng& rng);

} // namespace bmae
