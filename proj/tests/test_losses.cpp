// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The bmae Authors

#include <cmath>
#include <limits>

#include "bmae/losses.hpp"
#include "bmae/model.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace bmae;
using bmae::testing::random_image;

TEST_CASE("cross-entropy reference values") {
    const std::vector<double> uniform(100, 0.0);
    CHECK(loss_cls(uniform, 42) == doctest::Approx(4.6052).epsilon(1e-5));
    std::vector<double> confident(5, 0.0);
    confident[2] = 60.0;
    CHECK(loss_cls(confident, 2) < 1e-20);
    CHECK_THROWS_AS(loss_cls(confident, 5), InvalidArgument);
    CHECK_THROWS_AS(loss_cls(confident, -1), InvalidArgument);
    const std::vector<std::vector<double>> batch{{0.0, 1.0}, {2.0, -1.0}, {0.5, 0.5}};
    const std::vector<int> labels{1, 1, 0};
    double mean = 0;
    for (int i = 0; i < 3; ++i)
        mean += loss_cls(batch[i], labels[i]) / 3;
    CHECK(loss_cls_batch(batch, labels) == doctest::Approx(mean).epsilon(1e-15));
}

TEST_CASE("reconstruction loss is the plain pixel MSE") {
    Rng rng(1);
    const ImageTensor a = random_image(3, 8, rng), b = random_image(3, 8, rng);
    CHECK(loss_rec(a, a) == 0.0);
    CHECK(loss_rec(a, b) == loss_rec(b, a));
    ImageTensor zeros(3, 8), ones(3, 8);
    for (double& v : ones.pixels())
        v = 1.0;
    CHECK(loss_rec(zeros, ones) == 1.0);
    CHECK_THROWS_AS(loss_rec(zeros, ImageTensor(3, 4)), DimensionError);
}

TEST_CASE("detail loss reference values") {
    Rng rng(2);
    const FrequencyFilter filter(8, {});
    const ImageTensor x1 = random_image(3, 8, rng), x2 = random_image(3, 8, rng);
    const ImageTensor zero(3, 8);
    CHECK(loss_det(zero, x1, x1, filter) == 0.0);
    ImageTensor diff(3, 8);
    for (std::size_t i = 0; i < diff.numel(); ++i)
        diff.pixels()[i] = x2.pixels()[i] - x1.pixels()[i];
    CHECK(loss_det(diff, x1, x2, filter) < 1e-12);
    ImageTensor x2_doubled(3, 8);
    for (std::size_t i = 0; i < diff.numel(); ++i)
        x2_doubled.pixels()[i] = x1.pixels()[i] + 2 * diff.pixels()[i];
    CHECK(loss_det(zero, x1, x2_doubled, filter) == doctest::Approx(2 * loss_det(zero, x1, x2, filter)));
}

TEST_CASE("detail loss ignores a constant offset on both reconstructions") {
    Rng rng(3);
    const FrequencyFilter filter(16, {0.2});
    const ImageTensor pred = random_image(3, 16, rng);
    const ImageTensor x1 = random_image(3, 16, rng), x2 = random_image(3, 16, rng);
    ImageTensor s1 = x1, s2 = x2;
    for (std::size_t i = 0; i < s1.numel(); ++i) {
        s1.pixels()[i] += 0.3;
        s2.pixels()[i] += 0.3;
    }
    CHECK(std::abs(loss_det(pred, x1, x2, filter) - loss_det(pred, s1, s2, filter)) < 1e-12);
}

TEST_CASE("graph and value forms of the detail loss agree") {
    Rng rng(4);
    const FrequencyFilter filter(8, {0.25});
    const ImageTensor pred = random_image(3, 8, rng);
    const ImageTensor x1 = random_image(3, 8, rng), x2 = random_image(3, 8, rng);
    auto as_matrix = [](const ImageTensor& im) {
        return Matrix(Eigen::Map<const Matrix>(im.pixels().data(), im.channels(), im.side() * im.side()));
    };
    ad::Graph g(false);
    const double graph_value = loss_det(g.constant(as_matrix(pred)), as_matrix(x1), as_matrix(x2), filter).value()(0, 0);
    CHECK(graph_value == doctest::Approx(loss_det(pred, x1, x2, filter)).epsilon(1e-12));
}

TEST_CASE("weighted total follows the loss weights") {
    const LossWeights defaults;
    CHECK(defaults.cls == 0.01);
    CHECK(defaults.rec == 1.0);
    CHECK(defaults.det == 1.0);
    CHECK(total_loss(4.6052, 1.0, 1.0, defaults).total == doctest::Approx(2.046052).epsilon(1e-12));
    CHECK(total_loss(0, 0, 0, defaults).total == 0.0);
    const LossReport mae = total_loss(1.0, 2.0, 5.0, {0.01, 1.0, 0.0});
    CHECK(mae.total == doctest::Approx(0.01 + 2.0).epsilon(1e-15));
    CHECK(mae.det == 5.0);
}

TEST_CASE("non-finite terms are named") {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const double inf = std::numeric_limits<double>::infinity();
    try {
        total_loss(1.0, nan, 1.0, {});
        FAIL("expected NonFiniteLoss");
    } catch (const NonFiniteLoss& e) {
        CHECK(std::string(e.what()).find("rec") != std::string::npos);
    }
    CHECK_THROWS_AS(total_loss(inf, 0, 0, {}), NonFiniteLoss);
    CHECK_THROWS_AS(total_loss(0, 0, -inf, {}), NonFiniteLoss);
    CHECK_THROWS_AS(LossWeights({-0.1, 1, 1}).validate(), ConfigError);
}

namespace {

ModelConfig tiny() {
    ModelConfig c;
    c.embed_dim = 16;
    c.heads = 2;
    c.encoder_blocks = 2;
    c.mlp_hidden = 16;
    c.decoder_mlp_hidden = 16;
    c.detailed_mlp_hidden = 8;
    c.image_side = 8;
    c.patch_side = 4;
    return c;
}

// Parameter gradients of a weighted combination of the three loss terms.
std::vector<Matrix> term_gradients(const BilateralModel& model, const ImageTensor& img, const MaskPlan& plan,
                                   const Matrix& x1, const Matrix& x2, const FrequencyFilter& filter,
                                   const LossWeights& w, const std::vector<bool>* frozen = nullptr) {
    ad::Graph g(true);
    ParamBinding p(g, model.parameters(), frozen);
    const ForwardOutputs out = model.forward(p, patchify(img, 4), plan, filter);
    const std::pair<ad::Var, double> terms[] = {
        {ad::cross_entropy(out.logits, 1), w.cls},
        {loss_rec(out.reconstruction, model.to_matrix(img)), w.rec},
        {loss_det(out.detail_decoded, x1, x2, filter), w.det},
    };
    g.backward(ad::weighted_sum(terms));
    std::vector<Matrix> grads(model.parameters().size());
    for (int i = 0; i < model.parameters().size(); ++i)
        grads[i] = Matrix::Zero(model.parameters().value(i).rows(), model.parameters().value(i).cols());
    g.for_each_parameter_grad([&](int slot, const Matrix& gr) { grads[slot] += gr; });
    return grads;
}

} // namespace

TEST_CASE("the gradient of the total is the weighted sum of term gradients") {
    Rng rng(5);
    BilateralModel model(tiny(), 9);
    model.grow_head(3);
    randomize_parameters(model.parameters(), 0.1, rng);
    const FrequencyFilter filter(8, {});
    const ImageTensor img = random_image(3, 8, rng);
    const MaskPlan plan = sample_mask(2, 0.5, rng);
    const Matrix x1 = model.to_matrix(random_image(3, 8, rng));
    const Matrix x2 = model.to_matrix(random_image(3, 8, rng));
    const LossWeights w{0.3, 1.7, 0.6};
    const auto total = term_gradients(model, img, plan, x1, x2, filter, w);
    const auto gc = term_gradients(model, img, plan, x1, x2, filter, {1, 0, 0});
    const auto gr = term_gradients(model, img, plan, x1, x2, filter, {0, 1, 0});
    const auto gd = term_gradients(model, img, plan, x1, x2, filter, {0, 0, 1});
    for (std::size_t i = 0; i < total.size(); ++i) {
        const Matrix combo = w.cls * gc[i] + w.rec * gr[i] + w.det * gd[i];
        CHECK((total[i] - combo).cwiseAbs().maxCoeff() <= 1e-6 * std::max(1.0, combo.cwiseAbs().maxCoeff()));
    }
}

TEST_CASE("targets from detached reconstructions pass no gradient to the main path") {
    Rng rng(6);
    BilateralModel model(tiny(), 10);
    model.grow_head(2);
    randomize_parameters(model.parameters(), 0.1, rng);
    const FrequencyFilter filter(8, {});
    const ImageTensor img = random_image(3, 8, rng);
    // Targets computed by the same model, then used as plain values.
    const Matrix x1 = model.to_matrix(model.reconstruct_main(img, sample_mask(2, 0.75, rng)));
    const Matrix x2 = model.to_matrix(model.reconstruct_main(img, sample_mask(2, 0.5, rng)));
    const auto frozen = model.detail_branch_mask();
    const auto grads = term_gradients(model, img, sample_mask(2, 0.5, rng), x1, x2, filter, {0, 0, 1}, &frozen);
    bool any_detail_grad = false;
    for (int i = 0; i < model.parameters().size(); ++i) {
        const std::string& name = model.parameters().name(i);
        const bool main_path = name.rfind("encoder.", 0) == 0 && name.rfind("encoder.0.", 0) != 0;
        if (main_path || name.rfind("fusion.", 0) == 0 || name.rfind("head.", 0) == 0)
            CHECK(grads[i].cwiseAbs().maxCoeff() == 0.0);
        if (frozen[i])
            any_detail_grad = any_detail_grad || grads[i].cwiseAbs().maxCoeff() > 0;
    }
    CHECK_FALSE(any_detail_grad);
}
