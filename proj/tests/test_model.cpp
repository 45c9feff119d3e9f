// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The bmae Authors

#include <cmath>

#include "bmae/model.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace bmae;
using bmae::testing::random_image;

namespace {

ModelConfig tiny(bool bilateral = true) {
    ModelConfig c;
    c.embed_dim = 16;
    c.heads = 2;
    c.encoder_blocks = 2;
    c.decoder_blocks = 1;
    c.mlp_hidden = 24;
    c.decoder_mlp_hidden = 20;
    c.detailed_mlp_layers = 3;
    c.detailed_mlp_hidden = 12;
    c.image_side = 8;
    c.patch_side = 4;
    c.bilateral = bilateral;
    return c;
}

std::size_t block_params(std::size_t d, std::size_t h) {
    return 4 * d                 // two layer norms
           + d * 3 * d + 3 * d   // qkv
           + d * d + d           // projection
           + d * h + h + h * d + d;
}

// Parameter count written out layer by layer.
std::size_t expected_params(const ModelConfig& c, std::size_t classes) {
    const std::size_t d = c.embed_dim;
    const std::size_t pd = c.patch_dim();
    std::size_t n = pd * d + d;               // patch embedding
    n += 2 * d;                               // class and mask tokens
    n += c.encoder_blocks * block_params(d, c.mlp_hidden) + 2 * d;
    if (c.bilateral) {
        const std::size_t h = c.resolved_detail_hidden();
        n += d * h + h;                       // first layer
        n += (c.detailed_mlp_layers - 2) * (h * h + h);
        n += h * d + d;                       // last layer
    }
    n += block_params(d, c.mlp_hidden) + 2 * d;            // fusion
    n += c.decoder_blocks * block_params(d, c.decoder_mlp_hidden) + 2 * d;
    n += d * pd + pd;                                      // prediction
    n += classes * d + classes;
    return n;
}

} // namespace

TEST_CASE("parameter count matches the layer inventory") {
    for (bool bilateral : {true, false}) {
        BilateralModel model(tiny(bilateral), 1);
        CHECK(model.parameters().scalar_count() == expected_params(tiny(bilateral), 0));
        model.grow_head(3);
        CHECK(model.parameters().scalar_count() == expected_params(tiny(bilateral), 3));
    }
}

TEST_CASE("forward produces the documented shapes") {
    Rng rng(1);
    BilateralModel model(tiny(), 2);
    model.grow_head(4);
    const FrequencyFilter filter(8, {});
    const ImageTensor img = random_image(3, 8, rng);
    const MaskPlan plan = sample_mask(2, 0.5, rng);
    ad::Graph g(false);
    ParamBinding p(g, model.parameters());
    const ForwardOutputs out = model.forward(p, patchify(img, 4), plan, filter);
    CHECK(out.stem.rows() == 3);
    CHECK(out.stem.cols() == 16);
    CHECK(out.main_tokens.rows() == 3);
    CHECK(out.detail_tokens.rows() == 3);
    CHECK(out.z.rows() == 1);
    CHECK(out.z.cols() == 16);
    CHECK(out.logits.cols() == 4);
    CHECK(out.main_image.rows() == 3);
    CHECK(out.main_image.cols() == 64);
    CHECK(out.reconstruction.cols() == 64);
    CHECK((out.reconstruction.value() - out.main_image.value() - out.detail_image.value()).cwiseAbs().maxCoeff() <
          1e-12);
}

TEST_CASE("the detailed branch starts silent and lives under its own prefix") {
    Rng rng(2);
    BilateralModel model(tiny(), 3);
    model.grow_head(2);
    ad::Graph g(false);
    ParamBinding p(g, model.parameters());
    const Matrix tokens =
        model.detailed_branch(p, model.shared_stem(p, model.embed_and_mask(p, patchify(random_image(3, 8, rng), 4),
                                                                           full_plan(2))))
            .value();
    CHECK(tokens.cwiseAbs().maxCoeff() == 0.0);
    const auto mask = model.detail_branch_mask();
    int marked = 0;
    for (int i = 0; i < model.parameters().size(); ++i)
        if (mask[i]) {
            ++marked;
            CHECK(model.parameters().name(i).rfind("detail.", 0) == 0);
        }
    CHECK(marked == 6);
    CHECK(BilateralModel(tiny(false), 3).detail_branch_mask() == std::vector<bool>(
                                                                     BilateralModel(tiny(false), 3).parameters().size(),
                                                                     false));
}

TEST_CASE("growing the head keeps old rows and appends zero rows") {
    Rng rng(3);
    BilateralModel model(tiny(), 4);
    model.grow_head(2);
    const int w = model.parameters().find("head.weight");
    const int b = model.parameters().find("head.bias");
    randomize_parameters(model.parameters(), 0.1, rng);
    const Matrix old_w = model.parameters().value(w);
    const Matrix old_b = model.parameters().value(b);
    model.grow_head(3);
    CHECK(model.num_classes() == 5);
    CHECK(model.parameters().value(w).topRows(2) == old_w);
    CHECK(model.parameters().value(b).leftCols(2) == old_b);
    CHECK(model.parameters().value(w).bottomRows(3).cwiseAbs().maxCoeff() == 0.0);
    CHECK_THROWS_AS(model.grow_head(0), InvalidArgument);
}

TEST_CASE("classification needs a head") {
    Rng rng(4);
    BilateralModel model(tiny(), 5);
    CHECK_THROWS_AS(model.logits(random_image(3, 8, rng), full_plan(2)), InvalidArgument);
}

TEST_CASE("fusion can ignore the detail tokens as keys") {
    Rng rng(5);
    BilateralModel model(tiny(), 6);
    randomize_parameters(model.parameters(), 0.2, rng);
    ad::Graph g(false);
    ParamBinding p(g, model.parameters());
    const Matrix main = Matrix::Random(3, 16);
    const ad::Var m = g.constant(main);
    const Matrix a = model.fuse_embeddings(p, m, g.constant(Matrix::Random(3, 16)), false).value();
    const Matrix b = model.fuse_embeddings(p, m, g.constant(Matrix::Random(3, 16)), false).value();
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
    const Matrix c = model.fuse_embeddings(p, m, g.constant(Matrix::Random(3, 16)), true).value();
    CHECK((a - c).cwiseAbs().maxCoeff() > 0.0);
    CHECK_THROWS_AS(model.fuse_embeddings(p, m, g.constant(Matrix::Random(2, 16))), DimensionError);
}

TEST_CASE("value-only helpers agree with the graph forward pass") {
    Rng rng(6);
    BilateralModel model(tiny(), 7);
    model.grow_head(3);
    randomize_parameters(model.parameters(), 0.1, rng);
    const FrequencyFilter filter(8, {});
    const ImageTensor img = random_image(3, 8, rng);
    const MaskPlan plan = sample_mask(2, 0.5, rng);
    ad::Graph g(false);
    ParamBinding p(g, model.parameters());
    const ForwardOutputs out = model.forward(p, patchify(img, 4), plan, filter);
    const ImageTensor rec = model.reconstruct(patchify(img, 4), plan, filter);
    const ImageTensor main = model.reconstruct_main(img, plan);
    for (std::size_t i = 0; i < rec.pixels().size(); ++i) {
        CHECK(rec.pixels()[i] == doctest::Approx(out.reconstruction.value().data()[i]).epsilon(1e-12));
        CHECK(main.pixels()[i] == doctest::Approx(out.main_image.value().data()[i]).epsilon(1e-12));
    }
    const auto logits = model.logits(img, plan);
    const auto z = model.embedding(img, plan);
    for (int k = 0; k < 3; ++k)
        CHECK(logits[k] == doctest::Approx(out.logits.value()(0, k)).epsilon(1e-12));
    for (int k = 0; k < 16; ++k)
        CHECK(z[k] == doctest::Approx(out.z.value()(0, k)).epsilon(1e-12));
}

TEST_CASE("main-only models reconstruct with the main branch alone") {
    Rng rng(7);
    BilateralModel model(tiny(false), 8);
    model.grow_head(2);
    const FrequencyFilter filter(8, {});
    const ImageTensor img = random_image(3, 8, rng);
    const MaskPlan plan = sample_mask(2, 0.25, rng);
    CHECK(model.reconstruct(patchify(img, 4), plan, filter) == model.reconstruct_main(img, plan));
    ad::Graph g(false);
    ParamBinding p(g, model.parameters());
    CHECK_FALSE(model.forward(p, patchify(img, 4), plan, filter).detail_tokens.valid());
}

TEST_CASE("initialization is a function of the seed") {
    CHECK(BilateralModel(tiny(), 11).parameters() == BilateralModel(tiny(), 11).parameters());
    CHECK_FALSE(BilateralModel(tiny(), 11).parameters() == BilateralModel(tiny(), 12).parameters());
}

TEST_CASE("sine-cosine positions follow the closed form") {
    const Matrix pos = sincos_positional_encoding(3, 8);
    REQUIRE(pos.rows() == 9);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            for (int i = 0; i < 2; ++i) {
                const double omega = 1.0 / std::pow(10000.0, i / 2.0);
                CHECK(pos(r * 3 + c, i) == doctest::Approx(std::sin(r * omega)));
                CHECK(pos(r * 3 + c, 2 + i) == doctest::Approx(std::cos(r * omega)));
                CHECK(pos(r * 3 + c, 4 + i) == doctest::Approx(std::sin(c * omega)));
                CHECK(pos(r * 3 + c, 6 + i) == doctest::Approx(std::cos(c * omega)));
            }
}

TEST_CASE("inconsistent geometry is rejected") {
    ModelConfig c = tiny();
    c.heads = 3;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = tiny();
    c.patch_side = 3;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = tiny();
    c.embed_dim = 18;
    c.heads = 2;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = tiny();
    c.image_side = 32;
    c.patch_side = 0;
    CHECK(c.resolved_patch_side() == 4);
    c.image_side = 224;
    CHECK(c.resolved_patch_side() == 16);
    c = tiny();
    BilateralModel model(c, 1);
    Rng rng(1);
    ad::Graph g(false);
    ParamBinding p(g, model.parameters());
    CHECK_THROWS_AS(model.embed_and_mask(p, patchify(random_image(3, 16, rng), 4), full_plan(4)), DimensionError);
}
