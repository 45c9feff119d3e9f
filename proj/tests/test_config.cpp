// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The bmae Authors

#include <fstream>
#include <functional>

#include "bmae/config.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace bmae;
using bmae::testing::TempDir;

namespace {

std::string message_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}

} // namespace

TEST_CASE("defaults are the published hyperparameters and validate") {
    const ExperimentConfig c;
    CHECK(c.train.mask_ratio == 0.75);
    CHECK(c.train.coarse_mask_ratio == 0.75);
    CHECK(c.train.fine_mask_ratio == 0.4);
    CHECK(c.loss.cls == 0.01);
    CHECK(c.loss.rec == 1.0);
    CHECK(c.loss.det == 1.0);
    CHECK(c.train.lr == 1e-4);
    CHECK(c.model.encoder_blocks == 5);
    CHECK(c.model.decoder_blocks == 1);
    CHECK(c.model.embed_dim == 384);
    CHECK(c.model.heads == 12);
    CHECK(c.model.detailed_mlp_layers == 3);
    CHECK(c.store.mask_ratio == 0.75);
    CHECK(c.store.images_per_class == 20);
    CHECK_NOTHROW(c.validate());
}

TEST_CASE("canonical text round-trips every key") {
    ExperimentConfig c;
    c.name = "roundtrip";
    c.seed = 17;
    c.train.lr = 0.000123456789;
    c.train.balanced_batches = true;
    c.model.embed_dim = 32;
    c.model.heads = 4;
    c.freq.cutoff_fraction = 0.3;
    c.store.budget_bytes = 123456;
    const std::string text = to_text(c);
    CHECK(parse_config(text) == c);
    CHECK(to_text(parse_config(text)) == text);
    for (const auto& key : config_keys())
        CHECK(text.find(key + " = ") != std::string::npos);
}

TEST_CASE("keys read back what was set") {
    ExperimentConfig c;
    set_config_value(c, "train.epochs", "7");
    set_config_value(c, "model.bilateral", "false");
    set_config_value(c, "dataset.side", "16");
    CHECK(get_config_value(c, "train.epochs") == "7");
    CHECK(get_config_value(c, "model.bilateral") == "false");
    CHECK(c.train.epochs == 7);
    CHECK_FALSE(c.model.bilateral);
    CHECK(c.model.image_side == 16);
    set_config_value(c, "dataset.id", "cifar100");
    CHECK(c.model.image_side == 32);
}

TEST_CASE("malformed input names the offending key or line") {
    ExperimentConfig c;
    CHECK(message_of([&] { set_config_value(c, "train.epoch", "3"); }).find("train.epoch") != std::string::npos);
    CHECK(message_of([&] { set_config_value(c, "train.epochs", "3x"); }).find("integer") != std::string::npos);
    CHECK(message_of([&] { set_config_value(c, "train.lr", "fast"); }).find("number") != std::string::npos);
    CHECK(message_of([&] { set_config_value(c, "train.augment", "maybe"); }).find("true or false") !=
          std::string::npos);
    CHECK(message_of([&] { parse_config("train.epochs = 2\nnonsense\n"); }).find("line 2") != std::string::npos);
    CHECK(message_of([&] { parse_config("# comment\n\nbogus.key = 1"); }).find("line 3") != std::string::npos);
    CHECK_THROWS_AS(apply_overrides(c, {"train.epochs"}), ConfigError);
}

TEST_CASE("comments, whitespace and later lines") {
    const ExperimentConfig c = parse_config("  train.epochs = 3   # three\ntrain.epochs=4\n\n# all comment\n");
    CHECK(c.train.epochs == 4);
}

TEST_CASE("overrides apply in order") {
    ExperimentConfig c;
    apply_overrides(c, {"experiment.seed=5", "train.lr = 0.01", "experiment.seed=6"});
    CHECK(c.seed == 6);
    CHECK(c.train.lr == 0.01);
}

TEST_CASE("cross-field validation") {
    auto invalid = [](const std::string& text) {
        return message_of([&] { parse_config(text).validate(); });
    };
    CHECK(invalid("stream.tasks = 3") .find("stream.tasks") != std::string::npos);
    CHECK(invalid("train.fine_mask_ratio = 0.8").find("mask ratios") != std::string::npos);
    CHECK(invalid("train.coarse_mask_ratio = 1.0").find("mask ratios") != std::string::npos);
    CHECK(invalid("train.mask_ratio = 1").find("train.mask_ratio") != std::string::npos);
    CHECK(invalid("store.mask_ratio = -0.5").find("store.mask_ratio") != std::string::npos);
    CHECK(invalid("loss.det = -1").find("loss") != std::string::npos);
    CHECK(invalid("train.lr = 0").find("train.lr") != std::string::npos);
    CHECK(invalid("model.heads = 5").find("model.heads") != std::string::npos);
    CHECK(invalid("dataset.id = imagenet").find("dataset.id") != std::string::npos);
    CHECK(invalid("dataset.id = cifar100").find("dataset.path") != std::string::npos);
    CHECK(invalid("freq.cutoff_fraction = 2").size() > 0);
    CHECK(invalid("experiment.name = a/b").find("experiment.name") != std::string::npos);
}

TEST_CASE("config files load and report their path") {
    TempDir dir("cfg");
    const auto good = dir.path() / "good.cfg";
    std::ofstream(good) << "experiment.name = from_file\ntrain.epochs = 2\n";
    const ExperimentConfig c = load_config(good);
    CHECK(c.name == "from_file");
    CHECK(c.train.epochs == 2);
    const auto bad = dir.path() / "bad.cfg";
    std::ofstream(bad) << "train.epochs = many\n";
    CHECK(message_of([&] { load_config(bad); }).find("bad.cfg") != std::string::npos);
    CHECK_THROWS_AS(load_config(dir.path() / "absent.cfg"), ConfigError);
}
