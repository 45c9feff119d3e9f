// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The bmae Authors

#include "bmae/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <regex>

#include "bmae/checkpoint.hpp"

namespace bmae {

namespace {

// Purposes of derived RNG streams. Keeping them apart means adding draws to
// one phase never shifts the randomness of another.
enum : std::uint64_t {
    kInitStream = 1,
    kTrainStream = 2,
    kStoreStream = 3,
    kEvalStream = 4,
    kReplayMetricStream = 5,
};

std::vector<const LabeledImage*> first_per_class(const std::vector<Task>& tasks, int through, int per_class) {
    std::vector<const LabeledImage*> out;
    if (per_class <= 0)
        return out;
    for (int k = 0; k <= through; ++k) {
        std::map<int, int> taken;
        for (const auto& item : tasks[k].test)
            if (taken[item.label]++ < per_class)
                out.push_back(&item);
    }
    return out;
}

Matrix masked_patch_weight(const ModelConfig& config, const MaskPlan& plan) {
    const int s = config.image_side;
    const int p = config.resolved_patch_side();
    const int grid = config.grid_side();
    const auto visible = plan.visibility();
    Matrix w(config.channels, static_cast<Eigen::Index>(s) * s);
    for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x) {
            const double v = visible[(y / p) * grid + x / p] ? 0.0 : 1.0;
            for (int c = 0; c < config.channels; ++c)
                w(c, static_cast<Eigen::Index>(y) * s + x) = v;
        }
    return w;
}

} // namespace

ImageTensor reconstruct_exemplar(const PatchSet& exemplar, const BilateralModel& model,
                                 const FrequencyFilter& filter) {
    const ModelConfig& mc = model.config();
    if (exemplar.image_side != mc.image_side || exemplar.patch_side != mc.resolved_patch_side() ||
        exemplar.channels != mc.channels)
        throw DimensionError("exemplar geometry does not match the model");
    const DecodedExemplar dec = decode_exemplar(exemplar);
    PatchGrid rebuilt = patchify(model.reconstruct(dec.grid, dec.plan, filter).clamped(), dec.grid.patch_side);
    for (std::size_t k = 0; k < dec.plan.kept_count(); ++k) {
        const int row = dec.plan.flat(k);
        rebuilt.patches.row(row) = dec.grid.patches.row(row);
    }
    return unpatchify(rebuilt);
}

std::vector<LabeledImage> reconstruct_old_samples(const ExemplarStore& store, const BilateralModel& model,
                                                  const FrequencyFilter& filter) {
    std::vector<LabeledImage> out;
    out.reserve(store.entry_count());
    for (const auto& [cls, list] : store.all_entries())
        for (const auto& ps : list)
            out.push_back({reconstruct_exemplar(ps, model, filter), ps.label});
    return out;
}

std::vector<const LabeledImage*> sample_batch(std::span<const LabeledImage> replay,
                                              std::span<const LabeledImage> current, int batch_size, Rng& rng,
                                              bool balanced) {
    if (replay.empty() && current.empty())
        throw InvalidArgument("sample_batch: both replay and current data are empty");
    if (batch_size < 1)
        throw InvalidArgument("sample_batch: batch size must be positive");
    auto pick = [&rng](std::size_t pool, std::size_t count) {
        // Partial Fisher-Yates over [0, pool); exact uniform subset in draw order.
        std::vector<std::size_t> idx(pool);
        std::iota(idx.begin(), idx.end(), 0);
        count = std::min(count, pool);
        for (std::size_t i = 0; i < count; ++i) {
            std::uniform_int_distribution<std::size_t> d(i, pool - 1);
            std::swap(idx[i], idx[d(rng)]);
        }
        idx.resize(count);
        return idx;
    };
    std::vector<const LabeledImage*> batch;
    const auto b = static_cast<std::size_t>(batch_size);
    if (balanced && !replay.empty() && !current.empty()) {
        const std::size_t from_replay = std::min(replay.size(), b / 2);
        const std::size_t from_current = std::min(current.size(), b - from_replay);
        for (std::size_t i : pick(replay.size(), from_replay))
            batch.push_back(&replay[i]);
        for (std::size_t i : pick(current.size(), from_current))
            batch.push_back(&current[i]);
        return batch;
    }
    for (std::size_t i : pick(replay.size() + current.size(), b))
        batch.push_back(i < replay.size() ? &replay[i] : &current[i - replay.size()]);
    return batch;
}

DetachedPair mask_and_reconstruct(const ImageTensor& image, double r1, double r2, const BilateralModel& model,
                                  Rng& rng) {
    const int grid = model.config().grid_side();
    const MaskPlan coarse = sample_mask(grid, r1, rng);
    const MaskPlan fine = sample_mask(grid, r2, rng);
    return {model.to_matrix(model.reconstruct_main(image, coarse)),
            model.to_matrix(model.reconstruct_main(image, fine))};
}

SampleLoss sample_loss(ParamBinding& binding, const BilateralModel& model,
                       const LabeledImage& item, const TrainConfig& train, const LossWeights& weights,
                       const FrequencyFilter& filter, Rng& rng) {
    const ModelConfig& mc = model.config();
    const ImageTensor image = train.augment ? augment(item.image, train.augment_pad, rng) : item.image;
    const MaskPlan plan = sample_mask(mc.grid_side(), train.mask_ratio, rng);
    const ForwardOutputs out = model.forward(binding, patchify(image, mc.resolved_patch_side()), plan, filter);

    SampleLoss loss;
    const ad::Var cls = ad::cross_entropy(out.logits, item.label);
    const Matrix target = model.to_matrix(image);
    ad::Var rec;
    if (train.rec_masked_only) {
        const Matrix weight = masked_patch_weight(mc, plan);
        rec = loss_rec(out.reconstruction, target, &weight);
    } else {
        rec = loss_rec(out.reconstruction, target);
    }
    loss.cls = cls.value()(0, 0);
    loss.rec = rec.value()(0, 0);
    std::vector<std::pair<ad::Var, double>> terms{{cls, weights.cls}, {rec, weights.rec}};
    if (mc.bilateral && weights.det > 0.0) {
        const DetachedPair pair =
            mask_and_reconstruct(image, train.coarse_mask_ratio, train.fine_mask_ratio, model, rng);
        const ad::Var det = loss_det(out.detail_decoded, pair.coarse, pair.fine, filter);
        loss.det = det.value()(0, 0);
        terms.emplace_back(det, weights.det);
    }
    loss.total = ad::weighted_sum(terms);
    return loss;
}

LossReport batch_gradient(const BilateralModel& model, std::span<const LabeledImage* const> batch,
                          const TrainConfig& train, const LossWeights& weights, const FrequencyFilter& filter,
                          GradientBuffer& grads, Rng& rng, const std::vector<bool>* frozen) {
    if (batch.empty())
        throw InvalidArgument("batch_gradient: empty batch");
    const double scale = 1.0 / static_cast<double>(batch.size());
    double cls = 0, rec = 0, det = 0;
    for (const LabeledImage* item : batch) {
        ad::Graph graph(true);
        ParamBinding binding(graph, model.parameters(), frozen);
        const SampleLoss loss = sample_loss(binding, model, *item, train, weights, filter, rng);
        cls += loss.cls;
        rec += loss.rec;
        det += loss.det;
        graph.backward(loss.total);
        grads.add_from(graph, scale);
    }
    return total_loss(cls * scale, rec * scale, det * scale, weights);
}

double classification_accuracy(const BilateralModel& model, std::span<const LabeledImage> items,
                               double mask_ratio, Rng& rng) {
    if (items.empty())
        return 0.0;
    const int grid = model.config().grid_side();
    std::size_t correct = 0;
    for (const auto& item : items) {
        const MaskPlan plan = mask_ratio > 0.0 ? sample_mask(grid, mask_ratio, rng) : full_plan(grid);
        const auto logits = model.logits(item.image, plan);
        const auto best = std::max_element(logits.begin(), logits.end()) - logits.begin();
        correct += best == item.label ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(items.size());
}

double replay_reconstruction_mse(const BilateralModel& model, std::span<const LabeledImage> items,
                                 double mask_ratio, const FrequencyFilter& filter, Rng& rng) {
    if (items.empty())
        return 0.0;
    const int grid = model.config().grid_side();
    double total = 0.0;
    for (const auto& item : items) {
        const PatchSet ps = encode_exemplar(item.image, sample_mask(grid, mask_ratio, rng), item.label);
        total += mean_squared_error(reconstruct_exemplar(ps, model, filter), item.image);
    }
    return total / static_cast<double>(items.size());
}

Rng derive_rng(std::uint64_t seed, std::uint64_t purpose, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(purpose), static_cast<std::uint32_t>(index),
                      static_cast<std::uint32_t>(index >> 32)};
    return Rng(seq);
}

Dataset load_dataset(const DatasetConfig& config) {
    if (config.id == "synthetic") {
        SyntheticShapesSpec spec;
        spec.num_classes = config.classes;
        spec.side = config.side;
        spec.train_per_class = config.train_per_class;
        spec.test_per_class = config.test_per_class;
        return make_synthetic_shapes(spec, config.seed);
    }
    if (config.id == "cifar100") {
        if (config.path.empty() || !std::filesystem::exists(config.path))
            throw ConfigError("dataset.path '" + config.path + "' does not exist");
        return load_cifar100(config.path);
    }
    throw ConfigError("unknown dataset.id '" + config.id + "'");
}

Experiment::Experiment(ExperimentConfig config, TaskStream stream)
    : stream_(std::move(stream)), filter_(config.model.image_side, config.freq) {
    config.validate();
    state_.config = std::move(config);
    Rng init = derive_rng(state_.config.seed, kInitStream, 0);
    state_.model = std::make_unique<BilateralModel>(state_.config.model, init());
    state_.store = ExemplarStore(budget_bytes());
}

Experiment::Experiment(TrainingState state, TaskStream stream)
    : state_(std::move(state)), stream_(std::move(stream)), filter_(state_.config.model.image_side, state_.config.freq) {
    state_.config.validate();
    if (!state_.model)
        throw InvalidArgument("training state has no model");
    if (state_.tasks_done > stream_.size())
        throw ConfigError("checkpoint has more finished tasks than the stream holds");
    int expected_classes = 0;
    for (int t = 0; t < state_.tasks_done; ++t)
        expected_classes += static_cast<int>(stream_.task(t).classes.size());
    if (state_.model->num_classes() != expected_classes)
        throw ConfigError("checkpoint classifier size does not match the stream");
}

std::uint64_t Experiment::budget_bytes() const {
    const auto& c = state_.config;
    if (c.store.budget_bytes >= 0)
        return static_cast<std::uint64_t>(c.store.budget_bytes);
    return budget_for_images(static_cast<std::size_t>(c.store.images_per_class),
                             static_cast<std::size_t>(stream_.total_classes()), c.model.channels,
                             c.model.image_side);
}

void Experiment::train_next_task() {
    const int t = state_.tasks_done;
    if (t >= stream_.size())
        throw InvalidArgument("all tasks are already trained");
    const auto started = std::chrono::steady_clock::now();
    const ExperimentConfig& cfg = state_.config;
    const Task& task = stream_.task(t);
    BilateralModel& model = *state_.model;

    model.grow_head(static_cast<int>(task.classes.size()));
    const std::vector<LabeledImage> replay = reconstruct_old_samples(state_.store, model, filter_);
    log_info("task " + std::to_string(t) + ": " + std::to_string(task.train.size()) + " new images, " +
             std::to_string(replay.size()) + " replay images");

    Rng rng = derive_rng(cfg.seed, kTrainStream, static_cast<std::uint64_t>(t));
    const std::size_t pool = replay.size() + task.train.size();
    const std::size_t steps_per_epoch = (pool + cfg.train.batch_size - 1) / cfg.train.batch_size;
    const std::size_t total_steps = steps_per_epoch * static_cast<std::size_t>(cfg.train.epochs);
    Adam adam;
    std::size_t global_step = state_.ledger.steps.empty() ? 0 : state_.ledger.steps.back().step + 1;
    for (std::size_t s = 0; s < total_steps; ++s) {
        const auto batch = sample_batch(replay, task.train, cfg.train.batch_size, rng, cfg.train.balanced_batches);
        GradientBuffer grads(model.parameters());
        LossReport report;
        try {
            report = batch_gradient(model, batch, cfg.train, cfg.loss, filter_, grads, rng);
        } catch (const NonFiniteLoss& e) {
            log_warn("task " + std::to_string(t) + " step " + std::to_string(s) + ": " + e.what());
            throw;
        }
        adam.step(model.parameters(), grads, cosine_lr(cfg.train.lr, s, total_steps));
        StepRecord rec{global_step++, t, report};
        state_.ledger.steps.push_back(rec);
        if (on_step)
            on_step(rec);
    }

    Rng store_rng = derive_rng(cfg.seed, kStoreStream, static_cast<std::uint64_t>(t));
    for (int cls : task.classes) {
        std::vector<ImageTensor> pool_images;
        for (const auto& item : task.train)
            if (item.label == cls)
                pool_images.push_back(item.image);
        state_.store.admit_class(cls, pool_images, cfg.store.mask_ratio, cfg.model.resolved_patch_side(),
                                 store_rng);
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    finish_task(t, seconds);
}

std::vector<double> Experiment::evaluate() const {
    std::vector<double> row;
    Rng rng = derive_rng(state_.config.seed, kEvalStream, static_cast<std::uint64_t>(state_.tasks_done));
    for (int k = 0; k < state_.tasks_done; ++k)
        row.push_back(classification_accuracy(*state_.model, stream_.task(k).test, state_.config.eval.mask_ratio, rng));
    return row;
}

void Experiment::finish_task(int t, double seconds) {
    const ExperimentConfig& cfg = state_.config;
    state_.tasks_done = t + 1;
    state_.ledger.acc.push_back(evaluate());
    state_.ledger.test_counts.push_back(stream_.task(t).test.size());
    state_.ledger.wall_seconds.push_back(seconds);

    const auto probe = first_per_class(stream_.tasks(), t, cfg.eval.replay_samples_per_class);
    if (!probe.empty()) {
        std::vector<LabeledImage> items;
        for (const auto* p : probe)
            items.push_back(*p);
        Rng rng = derive_rng(cfg.seed, kReplayMetricStream, static_cast<std::uint64_t>(t));
        state_.ledger.replay_mse.push_back(
            replay_reconstruction_mse(*state_.model, items, cfg.store.mask_ratio, filter_, rng));
    }

    if (t + 1 == stream_.size() && cfg.eval.density_samples_per_class > 0) {
        const int grid = cfg.model.grid_side();
        std::vector<std::vector<double>> features;
        std::vector<int> labels;
        for (const auto* item : first_per_class(stream_.tasks(), t, cfg.eval.density_samples_per_class)) {
            features.push_back(state_.model->embedding(item->image, full_plan(grid)));
            labels.push_back(item->label);
        }
        try {
            state_.ledger.feature_density = feature_density(features, labels);
        } catch (const InvalidArgument& e) {
            log_warn(std::string("feature density skipped: ") + e.what());
        }
    }
    const auto& row = state_.ledger.acc.back();
    log_info("task " + std::to_string(t) + " done in " + std::to_string(seconds) + " s, seen-class accuracy " +
             std::to_string(phase_accuracy(state_.ledger, t)) + " (" + std::to_string(row.size()) + " tasks)");
}

std::filesystem::path latest_checkpoint(const std::filesystem::path& out_dir) {
    const auto dir = out_dir / "checkpoints";
    if (!std::filesystem::is_directory(dir))
        return {};
    const std::regex pattern("task_([0-9]+)\\.ckpt");
    int best = -1;
    std::filesystem::path found;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        std::smatch m;
        const std::string name = entry.path().filename().string();
        if (std::regex_match(name, m, pattern) && std::stoi(m[1]) > best) {
            best = std::stoi(m[1]);
            found = entry.path();
        }
    }
    return found;
}

MetricsLedger run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir, bool resume) {
    config.validate();
    const Dataset dataset = load_dataset(config.dataset);
    TaskStream stream = TaskStream::from_dataset(dataset, config.tasks, config.class_order_seed);

    std::unique_ptr<Experiment> experiment;
    if (resume) {
        const auto ckpt = latest_checkpoint(out_dir);
        if (!ckpt.empty()) {
            TrainingState state = load_checkpoint(ckpt);
            if (!(state.config == config))
                throw ConfigError("configuration differs from the one stored in " + ckpt.string());
            log_info("resuming after task " + std::to_string(state.tasks_done - 1) + " from " + ckpt.string());
            experiment = std::make_unique<Experiment>(std::move(state), std::move(stream));
        } else {
            log_info("no checkpoint under " + out_dir.string() + "; starting from scratch");
        }
    }
    if (!experiment)
        experiment = std::make_unique<Experiment>(config, std::move(stream));

    std::filesystem::create_directories(out_dir);
    {
        std::ofstream out(out_dir / "config.resolved.cfg", std::ios::trunc);
        out << to_text(config);
        if (!out)
            throw IoError("cannot write resolved config");
    }
    const auto reports = out_dir / "reports";
    while (experiment->tasks_done() < experiment->stream().size()) {
        const int t = experiment->tasks_done();
        try {
            experiment->train_next_task();
        } catch (const NonFiniteLoss&) {
            const auto dump = out_dir / "checkpoints" / ("failure_task_" + std::to_string(t) + ".ckpt");
            std::filesystem::create_directories(dump.parent_path());
            save_checkpoint(experiment->state(), dump);
            log_warn("state dumped to " + dump.string());
            throw;
        }
        if (config.checkpoints) {
            std::filesystem::create_directories(out_dir / "checkpoints");
            save_checkpoint(experiment->state(), out_dir / "checkpoints" / ("task_" + std::to_string(t) + ".ckpt"));
        }
        experiment->store().save(out_dir / "store.bin");
        emit_reports(experiment->ledger(), reports);
    }
    if (experiment->ledger().phases() > 0)
        emit_reports(experiment->ledger(), reports);
    return experiment->ledger();
}

std::vector<double> evaluate_checkpoint(const std::filesystem::path& checkpoint) {
    TrainingState state = load_checkpoint(checkpoint);
    const Dataset dataset = load_dataset(state.config.dataset);
    TaskStream stream = TaskStream::from_dataset(dataset, state.config.tasks, state.config.class_order_seed);
    const Experiment experiment(std::move(state), std::move(stream));
    return experiment.evaluate();
}

std::size_t reconstruct_store_images(const std::filesystem::path& store_path,
                                     const std::filesystem::path& checkpoint,
                                     const std::filesystem::path& out_dir) {
    const ExemplarStore store = ExemplarStore::load(store_path);
    const TrainingState state = load_checkpoint(checkpoint);
    const FrequencyFilter filter(state.config.model.image_side, state.config.freq);
    // Decode everything before touching the output directory.
    std::vector<std::pair<std::string, ImageTensor>> images;
    for (const auto& [cls, list] : store.all_entries())
        for (std::size_t i = 0; i < list.size(); ++i) {
            char name[64];
            std::snprintf(name, sizeof name, "class_%03d_%04zu.ppm", cls, i);
            images.emplace_back(name, reconstruct_exemplar(list[i], *state.model, filter));
        }
    std::filesystem::create_directories(out_dir);
    for (const auto& [name, image] : images)
        write_ppm(image, out_dir / name);
    return images.size();
}

} // namespace bmae
