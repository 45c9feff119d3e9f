// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The bmae Authors

#include "bmae/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace bmae {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
        return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_integer(const std::string& key, const std::string& text) {
    T v{};
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end)
        throw ConfigError(key + ": expected an integer, got '" + text + "'");
    return v;
}

double parse_real(const std::string& key, const std::string& text) {
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used == text.size())
            return v;
    } catch (const std::exception&) {
    }
    throw ConfigError(key + ": expected a number, got '" + text + "'");
}

bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1" || text == "yes" || text == "on")
        return true;
    if (text == "false" || text == "0" || text == "no" || text == "off")
        return false;
    throw ConfigError(key + ": expected true or false, got '" + text + "'");
}

std::string real_text(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct Field {
    std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

template <typename T, typename Access>
Field integer_field(Access access) {
    return {[access](ExperimentConfig& c, const std::string& k, const std::string& v) {
                access(c) = parse_integer<T>(k, v);
            },
            [access](const ExperimentConfig& c) {
                return std::to_string(access(const_cast<ExperimentConfig&>(c)));
            }};
}

template <typename Access>
Field real_field(Access access) {
    return {[access](ExperimentConfig& c, const std::string& k, const std::string& v) { access(c) = parse_real(k, v); },
            [access](const ExperimentConfig& c) { return real_text(access(const_cast<ExperimentConfig&>(c))); }};
}

template <typename Access>
Field bool_field(Access access) {
    return {[access](ExperimentConfig& c, const std::string& k, const std::string& v) { access(c) = parse_bool(k, v); },
            [access](const ExperimentConfig& c) {
                return std::string(access(const_cast<ExperimentConfig&>(c)) ? "true" : "false");
            }};
}

template <typename Access>
Field string_field(Access access) {
    return {[access](ExperimentConfig& c, const std::string&, const std::string& v) { access(c) = v; },
            [access](const ExperimentConfig& c) { return access(const_cast<ExperimentConfig&>(c)); }};
}

using Table = std::vector<std::pair<std::string, Field>>;

// The accessors return references into a mutable config; getters only read.
#define BMAE_REF(expr) [](ExperimentConfig& c) -> auto& { return expr; }

const Table& table() {
    static const Table fields = {
        {"experiment.name", string_field(BMAE_REF(c.name))},
        {"experiment.seed", integer_field<std::uint64_t>(BMAE_REF(c.seed))},
        {"experiment.checkpoints", bool_field(BMAE_REF(c.checkpoints))},
        {"dataset.id", string_field(BMAE_REF(c.dataset.id))},
        {"dataset.path", string_field(BMAE_REF(c.dataset.path))},
        {"dataset.classes", integer_field<int>(BMAE_REF(c.dataset.classes))},
        {"dataset.side", integer_field<int>(BMAE_REF(c.dataset.side))},
        {"dataset.train_per_class", integer_field<int>(BMAE_REF(c.dataset.train_per_class))},
        {"dataset.test_per_class", integer_field<int>(BMAE_REF(c.dataset.test_per_class))},
        {"dataset.seed", integer_field<std::uint64_t>(BMAE_REF(c.dataset.seed))},
        {"stream.tasks", integer_field<int>(BMAE_REF(c.tasks))},
        {"stream.class_order_seed", integer_field<std::uint64_t>(BMAE_REF(c.class_order_seed))},
        {"train.mask_ratio", real_field(BMAE_REF(c.train.mask_ratio))},
        {"train.coarse_mask_ratio", real_field(BMAE_REF(c.train.coarse_mask_ratio))},
        {"train.fine_mask_ratio", real_field(BMAE_REF(c.train.fine_mask_ratio))},
        {"train.epochs", integer_field<int>(BMAE_REF(c.train.epochs))},
        {"train.batch_size", integer_field<int>(BMAE_REF(c.train.batch_size))},
        {"train.lr", real_field(BMAE_REF(c.train.lr))},
        {"train.balanced_batches", bool_field(BMAE_REF(c.train.balanced_batches))},
        {"train.augment", bool_field(BMAE_REF(c.train.augment))},
        {"train.augment_pad", integer_field<int>(BMAE_REF(c.train.augment_pad))},
        {"train.rec_masked_only", bool_field(BMAE_REF(c.train.rec_masked_only))},
        {"model.embed_dim", integer_field<int>(BMAE_REF(c.model.embed_dim))},
        {"model.encoder_blocks", integer_field<int>(BMAE_REF(c.model.encoder_blocks))},
        {"model.decoder_blocks", integer_field<int>(BMAE_REF(c.model.decoder_blocks))},
        {"model.heads", integer_field<int>(BMAE_REF(c.model.heads))},
        {"model.patch_side", integer_field<int>(BMAE_REF(c.model.patch_side))},
        {"model.mlp_hidden", integer_field<int>(BMAE_REF(c.model.mlp_hidden))},
        {"model.decoder_mlp_hidden", integer_field<int>(BMAE_REF(c.model.decoder_mlp_hidden))},
        {"model.detailed_mlp_layers", integer_field<int>(BMAE_REF(c.model.detailed_mlp_layers))},
        {"model.detailed_mlp_hidden", integer_field<int>(BMAE_REF(c.model.detailed_mlp_hidden))},
        {"model.bilateral", bool_field(BMAE_REF(c.model.bilateral))},
        {"loss.cls", real_field(BMAE_REF(c.loss.cls))},
        {"loss.rec", real_field(BMAE_REF(c.loss.rec))},
        {"loss.det", real_field(BMAE_REF(c.loss.det))},
        {"freq.cutoff_fraction", real_field(BMAE_REF(c.freq.cutoff_fraction))},
        {"store.mask_ratio", real_field(BMAE_REF(c.store.mask_ratio))},
        {"store.images_per_class", integer_field<int>(BMAE_REF(c.store.images_per_class))},
        {"store.budget_bytes", integer_field<std::int64_t>(BMAE_REF(c.store.budget_bytes))},
        {"eval.mask_ratio", real_field(BMAE_REF(c.eval.mask_ratio))},
        {"eval.replay_samples_per_class", integer_field<int>(BMAE_REF(c.eval.replay_samples_per_class))},
        {"eval.density_samples_per_class", integer_field<int>(BMAE_REF(c.eval.density_samples_per_class))},
    };
    return fields;
}

#undef BMAE_REF

const Field& find_field(const std::string& key) {
    for (const auto& [name, field] : table())
        if (name == key)
            return field;
    throw ConfigError("unknown config key '" + key + "'");
}

} // namespace

void ExperimentConfig::validate() const {
    if (name.empty() || name.find_first_of("/\\") != std::string::npos)
        throw ConfigError("experiment.name must be a non-empty plain name");
    if (dataset.id != "synthetic" && dataset.id != "cifar100")
        throw ConfigError("dataset.id must be 'synthetic' or 'cifar100'");
    if (dataset.id == "cifar100" && dataset.path.empty())
        throw ConfigError("dataset.path is required for cifar100");
    if (dataset.id == "synthetic" &&
        (dataset.classes < 1 || dataset.side < 8 || dataset.train_per_class < 1 || dataset.test_per_class < 1))
        throw ConfigError("synthetic dataset needs classes >= 1, side >= 8 and at least one image per split");
    const int classes = dataset.id == "cifar100" ? 100 : dataset.classes;
    const int side = dataset.id == "cifar100" ? 32 : dataset.side;
    if (tasks < 1 || classes % tasks != 0)
        throw ConfigError("stream.tasks must divide the number of classes evenly");
    if (model.image_side != side)
        throw ConfigError("model.image_side (" + std::to_string(model.image_side) +
                          ") must equal the dataset image side (" + std::to_string(side) + ")");
    if (model.channels != 3)
        throw ConfigError("model.channels must be 3 for the supported datasets");
    model.validate();
    loss.validate();
    freq.validate();

    auto ratio_ok = [](double r) { return r >= 0.0 && r < 1.0; };
    if (!ratio_ok(train.mask_ratio))
        throw ConfigError("train.mask_ratio must lie in [0, 1)");
    if (!(0.0 <= train.fine_mask_ratio && train.fine_mask_ratio < train.coarse_mask_ratio &&
          train.coarse_mask_ratio < 1.0))
        throw ConfigError("mask ratios must satisfy 0 <= train.fine_mask_ratio < train.coarse_mask_ratio < 1");
    if (train.epochs < 1 || train.batch_size < 1)
        throw ConfigError("train.epochs and train.batch_size must be positive");
    if (!(train.lr > 0.0) || !std::isfinite(train.lr))
        throw ConfigError("train.lr must be positive");
    if (train.augment_pad < 0 || train.augment_pad >= side)
        throw ConfigError("train.augment_pad must lie in [0, image side)");
    if (!ratio_ok(store.mask_ratio))
        throw ConfigError("store.mask_ratio must lie in [0, 1)");
    if (store.images_per_class < 0)
        throw ConfigError("store.images_per_class must be non-negative");
    if (!ratio_ok(eval.mask_ratio))
        throw ConfigError("eval.mask_ratio must lie in [0, 1)");
    if (eval.replay_samples_per_class < 0 || eval.density_samples_per_class < 0)
        throw ConfigError("eval sample counts must be non-negative");
    if (eval.density_samples_per_class == 1)
        throw ConfigError("eval.density_samples_per_class needs at least two samples per class");
    if (model.grid_side() * model.grid_side() >= 65536)
        throw ConfigError("too many patches per image for the exemplar format");
}

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> out;
        for (const auto& [name, field] : table())
            out.push_back(name);
        return out;
    }();
    return keys;
}

void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value) {
    find_field(key).set(config, key, value);
    // The model geometry follows the dataset.
    config.model.image_side = config.dataset.id == "cifar100" ? 32 : config.dataset.side;
}

std::string get_config_value(const ExperimentConfig& config, const std::string& key) {
    return find_field(key).get(config);
}

ExperimentConfig parse_config(const std::string& text, ExperimentConfig base) {
    std::istringstream in(text);
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto hash = line.find('#');
        if (hash != std::string::npos)
            line.erase(hash);
        line = trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(number) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        try {
            set_config_value(base, key, trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError("line " + std::to_string(number) + ": " + e.what());
        }
    }
    return base;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot read config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse_config(ss.str());
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

std::string to_text(const ExperimentConfig& config) {
    std::string out;
    std::string section;
    for (const auto& [name, field] : table()) {
        const std::string prefix = name.substr(0, name.find('.'));
        if (prefix != section) {
            if (!section.empty())
                out += "\n";
            section = prefix;
        }
        out += name + " = " + field.get(config) + "\n";
    }
    return out;
}

void apply_overrides(ExperimentConfig& config, const std::vector<std::string>& overrides) {
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos)
            throw ConfigError("override '" + o + "' is not of the form key=value");
        set_config_value(config, trim(o.substr(0, eq)), trim(o.substr(eq + 1)));
    }
}

} // namespace bmae
