// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The bmae Authors

#include "bmae/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

namespace bmae {

namespace {

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
    h = std::fmod(h, 360.0);
    if (h < 0)
        h += 360.0;
    const double c = v * s;
    const double x = c * (1.0 - std::abs(std::fmod(h / 60.0, 2.0) - 1.0));
    const double m = v - c;
    double r = 0, g = 0, b = 0;
    switch (static_cast<int>(h / 60.0)) {
    case 0: r = c, g = x; break;
    case 1: r = x, g = c; break;
    case 2: g = c, b = x; break;
    case 3: g = x, b = c; break;
    case 4: r = x, b = c; break;
    default: r = c, b = x; break;
    }
    return {r + m, g + m, b + m};
}

bool inside_shape(int shape, double dx, double dy, double radius) {
    const double dist = std::sqrt(dx * dx + dy * dy);
    switch (shape) {
    case 0: return dist <= radius;
    case 1: return std::abs(dx) <= 0.85 * radius && std::abs(dy) <= 0.85 * radius;
    case 2: {
        if (dy < -radius || dy > radius)
            return false;
        const double half_width = (dy + radius) / 2.0;
        return std::abs(dx) <= half_width;
    }
    case 3: {
        const double arm = radius / 3.0;
        return (std::abs(dx) <= arm && std::abs(dy) <= radius) || (std::abs(dy) <= arm && std::abs(dx) <= radius);
    }
    default: return dist <= radius && dist >= 0.55 * radius;
    }
}

ImageTensor draw_shape(int cls, int num_classes, int side, Rng& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 0.03);
    const double scale = side / 32.0;
    const double hue = cls * 360.0 / num_classes + (unit(rng) - 0.5) * 16.0;
    const auto rgb = hsv_to_rgb(hue, 0.7 + 0.25 * unit(rng), 0.7 + 0.25 * unit(rng));
    const double background = 0.1 + 0.2 * unit(rng);
    const double radius = (7.0 + 4.0 * unit(rng)) * scale;
    const double cx = side / 2.0 + (unit(rng) - 0.5) * 8.0 * scale;
    const double cy = side / 2.0 + (unit(rng) - 0.5) * 8.0 * scale;

    ImageTensor img(3, side);
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) {
            const bool in = inside_shape(cls % 5, x + 0.5 - cx, y + 0.5 - cy, radius);
            for (int c = 0; c < 3; ++c) {
                const double base = in ? rgb[c] : background;
                img.at(c, y, x) = std::clamp(base + noise(rng), 0.0, 1.0);
            }
        }
    return img;
}

std::vector<LabeledImage> read_cifar_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open CIFAR-100 file " + path.string());
    constexpr int kSide = 32;
    constexpr std::size_t kRecord = 2 + 3 * kSide * kSide;
    std::vector<unsigned char> buf(kRecord);
    std::vector<LabeledImage> out;
    while (in.read(reinterpret_cast<char*>(buf.data()), kRecord)) {
        LabeledImage item;
        item.label = buf[1];
        std::vector<double> px(3 * kSide * kSide);
        for (std::size_t i = 0; i < px.size(); ++i)
            px[i] = buf[2 + i] / 255.0;
        item.image = ImageTensor(3, kSide, std::move(px));
        out.push_back(std::move(item));
    }
    if (in.gcount() != 0)
        throw IoError("truncated CIFAR-100 record in " + path.string());
    return out;
}

} // namespace

Dataset make_synthetic_shapes(const SyntheticShapesSpec& spec, std::uint64_t seed) {
    if (spec.num_classes < 1 || spec.side < 8 || spec.train_per_class < 0 || spec.test_per_class < 0)
        throw ConfigError("invalid synthetic dataset specification");
    Rng rng(seed);
    Dataset ds;
    ds.num_classes = spec.num_classes;
    ds.channels = 3;
    ds.side = spec.side;
    for (int c = 0; c < spec.num_classes; ++c) {
        for (int i = 0; i < spec.train_per_class; ++i)
            ds.train.push_back({draw_shape(c, spec.num_classes, spec.side, rng), c});
        for (int i = 0; i < spec.test_per_class; ++i)
            ds.test.push_back({draw_shape(c, spec.num_classes, spec.side, rng), c});
    }
    return ds;
}

Dataset load_cifar100(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir))
        throw ConfigError("CIFAR-100 directory not found: " + dir.string());
    Dataset ds;
    ds.num_classes = 100;
    ds.channels = 3;
    ds.side = 32;
    ds.train = read_cifar_file(dir / "train.bin");
    ds.test = read_cifar_file(dir / "test.bin");
    return ds;
}

TaskStream::TaskStream(std::vector<Task> tasks, std::vector<int> class_order)
    : tasks_(std::move(tasks)), class_order_(std::move(class_order)) {
    std::set<int> seen;
    for (std::size_t t = 0; t < tasks_.size(); ++t) {
        tasks_[t].index = static_cast<int>(t);
        if (tasks_[t].classes.empty())
            throw ConfigError("task " + std::to_string(t) + " has no classes");
        for (int c : tasks_[t].classes)
            if (!seen.insert(c).second)
                throw ConfigError("class " + std::to_string(c) + " appears in more than one task");
        const std::set<int> own(tasks_[t].classes.begin(), tasks_[t].classes.end());
        for (const auto* split : {&tasks_[t].train, &tasks_[t].test})
            for (const auto& item : *split)
                if (!own.count(item.label))
                    throw ConfigError("task " + std::to_string(t) + " holds an image of a foreign class");
    }
    if (class_order_.empty()) {
        class_order_.assign(seen.begin(), seen.end());
    }
}

TaskStream TaskStream::from_dataset(const Dataset& dataset, int task_count, std::uint64_t class_order_seed) {
    if (task_count < 1 || dataset.num_classes % task_count != 0)
        throw ConfigError("stream.tasks must divide the number of classes evenly");
    std::vector<int> order(dataset.num_classes);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(class_order_seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<int> head_index(dataset.num_classes);
    for (int i = 0; i < dataset.num_classes; ++i)
        head_index[order[i]] = i;

    const int per_task = dataset.num_classes / task_count;
    std::vector<Task> tasks(task_count);
    for (int t = 0; t < task_count; ++t)
        for (int i = 0; i < per_task; ++i)
            tasks[t].classes.push_back(t * per_task + i);
    for (const auto& item : dataset.train)
        tasks[head_index[item.label] / per_task].train.push_back({item.image, head_index[item.label]});
    for (const auto& item : dataset.test)
        tasks[head_index[item.label] / per_task].test.push_back({item.image, head_index[item.label]});
    return TaskStream(std::move(tasks), std::move(order));
}

int TaskStream::total_classes() const {
    int n = 0;
    for (const auto& t : tasks_)
        n += static_cast<int>(t.classes.size());
    return n;
}

ImageTensor augment(const ImageTensor& image, int pad, Rng& rng) {
    const int s = image.side();
    std::uniform_int_distribution<int> coin(0, 1);
    std::uniform_int_distribution<int> shift(-pad, pad);
    const bool flip = coin(rng) == 1;
    const int dy = pad > 0 ? shift(rng) : 0;
    const int dx = pad > 0 ? shift(rng) : 0;
    ImageTensor out(image.channels(), s);
    for (int c = 0; c < image.channels(); ++c)
        for (int y = 0; y < s; ++y)
            for (int x = 0; x < s; ++x) {
                const int sy = y + dy;
                int sx = x + dx;
                if (sy < 0 || sy >= s || sx < 0 || sx >= s)
                    continue;
                if (flip)
                    sx = s - 1 - sx;
                out.at(c, y, x) = image.at(c, sy, sx);
            }
    return out;
}

} // namespace bmae
