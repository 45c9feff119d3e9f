// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The bmae Authors

#include "bmae/model.hpp"

#include <cmath>

namespace bmae {

using ad::Var;

void ModelConfig::validate() const {
    if (embed_dim <= 0 || heads <= 0 || embed_dim % heads != 0)
        throw ConfigError("model.embed_dim must be a positive multiple of model.heads");
    if (embed_dim % 4 != 0)
        throw ConfigError("model.embed_dim must be divisible by 4 for 2D sine-cosine positions");
    if (encoder_blocks < 1)
        throw ConfigError("model.encoder_blocks must be at least 1");
    if (decoder_blocks < 1)
        throw ConfigError("model.decoder_blocks must be at least 1");
    if (mlp_hidden <= 0 || decoder_mlp_hidden <= 0)
        throw ConfigError("model MLP widths must be positive");
    if (detailed_mlp_layers < 1 || detailed_mlp_hidden < 0)
        throw ConfigError("model.detailed_mlp_layers must be at least 1");
    if (channels <= 0 || image_side <= 0)
        throw ConfigError("model image geometry must be positive");
    const int p = resolved_patch_side();
    if (image_side % p != 0)
        throw ConfigError("model.image_side must be divisible by model.patch_side");
    if (image_side / p >= 256)
        throw ConfigError("patch grid side must stay below 256");
}

int ParameterSet::add(std::string name, Matrix value) {
    names_.push_back(std::move(name));
    values_.push_back(std::move(value));
    return size() - 1;
}

int ParameterSet::find(const std::string& name) const {
    for (int i = 0; i < size(); ++i)
        if (names_[i] == name)
            return i;
    return -1;
}

std::size_t ParameterSet::scalar_count() const {
    std::size_t n = 0;
    for (const auto& v : values_)
        n += static_cast<std::size_t>(v.size());
    return n;
}

ParamBinding::ParamBinding(ad::Graph& graph, const ParameterSet& params, const std::vector<bool>* frozen)
    : graph_(graph), params_(params), frozen_(frozen), cache_(params.size()) {}

Var ParamBinding::operator()(int slot) {
    Var& v = cache_[slot];
    if (!v.valid()) {
        const bool frozen = frozen_ && (*frozen_)[slot];
        v = (graph_.recording() && !frozen) ? graph_.parameter(slot, params_.value(slot))
                                            : graph_.constant_ref(params_.value(slot));
    }
    return v;
}

Matrix sincos_positional_encoding(int grid_side, int dim) {
    const int quarter = dim / 4;
    Matrix pos(grid_side * grid_side, dim);
    auto fill = [&](int row, int offset, double coord) {
        for (int i = 0; i < quarter; ++i) {
            const double omega = 1.0 / std::pow(10000.0, static_cast<double>(i) / quarter);
            pos(row, offset + i) = std::sin(coord * omega);
            pos(row, offset + quarter + i) = std::cos(coord * omega);
        }
    };
    for (int r = 0; r < grid_side; ++r)
        for (int c = 0; c < grid_side; ++c) {
            const int row = r * grid_side + c;
            fill(row, 0, r);
            fill(row, 2 * quarter, c);
        }
    return pos;
}

void randomize_parameters(ParameterSet& params, double stddev, Rng& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (int i = 0; i < params.size(); ++i) {
        Matrix& m = params.value(i);
        for (Eigen::Index k = 0; k < m.size(); ++k)
            m.data()[k] = dist(rng);
    }
}

BilateralModel::BilateralModel(ModelConfig config, std::uint64_t init_seed) : config_(config) {
    config_.validate();
    Rng rng(init_seed);
    const int d = config_.embed_dim;
    const int grid = config_.grid_side();

    pos_ = sincos_positional_encoding(grid, d);
    const int p = config_.resolved_patch_side();
    const int s = config_.image_side;
    const int c_count = config_.channels;
    unpatchify_map_.resize(static_cast<std::size_t>(c_count) * s * s);
    for (int c = 0; c < c_count; ++c)
        for (int y = 0; y < s; ++y)
            for (int x = 0; x < s; ++x) {
                const int row = (y / p) * grid + x / p;
                const int col = ((y % p) * p + x % p) * c_count + c;
                unpatchify_map_[(static_cast<std::size_t>(c) * s + y) * s + x] = row * config_.patch_dim() + col;
            }

    std::normal_distribution<double> token_init(0.0, 0.02);
    auto token = [&](const std::string& name) {
        Matrix m(1, d);
        for (Eigen::Index k = 0; k < m.size(); ++k)
            m.data()[k] = token_init(rng);
        return params_.add(name, std::move(m));
    };

    patch_embed_ = add_linear("patch_embed", config_.patch_dim(), d, rng);
    cls_token_ = token("cls_token");
    for (int i = 0; i < config_.encoder_blocks; ++i)
        encoder_.push_back(add_block("encoder." + std::to_string(i), d, config_.mlp_hidden, rng));
    enc_norm_g_ = params_.add("encoder.norm.gain", Matrix::Ones(1, d));
    enc_norm_b_ = params_.add("encoder.norm.bias", Matrix::Zero(1, d));

    if (config_.bilateral) {
        const int h = config_.resolved_detail_hidden();
        const int layers = config_.detailed_mlp_layers;
        for (int i = 0; i < layers; ++i) {
            const int in = i == 0 ? d : h;
            const int out = i == layers - 1 ? d : h;
            // The last layer starts at zero so the branch initially contributes nothing.
            detail_.push_back(add_linear("detail.fc" + std::to_string(i), in, out, rng, i == layers - 1));
        }
    }
    fusion_ = add_block("fusion", d, config_.mlp_hidden, rng);
    fusion_norm_g_ = params_.add("fusion.norm.gain", Matrix::Ones(1, d));
    fusion_norm_b_ = params_.add("fusion.norm.bias", Matrix::Zero(1, d));

    mask_token_ = token("decoder.mask_token");
    for (int i = 0; i < config_.decoder_blocks; ++i)
        decoder_.push_back(add_block("decoder." + std::to_string(i), d, config_.decoder_mlp_hidden, rng));
    dec_norm_g_ = params_.add("decoder.norm.gain", Matrix::Ones(1, d));
    dec_norm_b_ = params_.add("decoder.norm.bias", Matrix::Zero(1, d));
    dec_pred_ = add_linear("decoder.pred", d, config_.patch_dim(), rng);

    head_w_ = params_.add("head.weight", Matrix(0, d));
    head_b_ = params_.add("head.bias", Matrix(1, 0));
}

BilateralModel::LinearSlots BilateralModel::add_linear(const std::string& name, int in, int out, Rng& rng,
                                                       bool zero) {
    Matrix w = Matrix::Zero(in, out);
    if (!zero) {
        const double bound = std::sqrt(6.0 / (in + out));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (Eigen::Index k = 0; k < w.size(); ++k)
            w.data()[k] = dist(rng);
    }
    LinearSlots s;
    s.w = params_.add(name + ".weight", std::move(w));
    s.b = params_.add(name + ".bias", Matrix::Zero(1, out));
    return s;
}

BilateralModel::BlockSlots BilateralModel::add_block(const std::string& name, int dim, int hidden, Rng& rng) {
    BlockSlots b;
    b.ln1_g = params_.add(name + ".ln1.gain", Matrix::Ones(1, dim));
    b.ln1_b = params_.add(name + ".ln1.bias", Matrix::Zero(1, dim));
    b.qkv = add_linear(name + ".attn.qkv", dim, 3 * dim, rng);
    b.proj = add_linear(name + ".attn.proj", dim, dim, rng);
    b.ln2_g = params_.add(name + ".ln2.gain", Matrix::Ones(1, dim));
    b.ln2_b = params_.add(name + ".ln2.bias", Matrix::Zero(1, dim));
    b.fc1 = add_linear(name + ".mlp.fc1", dim, hidden, rng);
    b.fc2 = add_linear(name + ".mlp.fc2", hidden, dim, rng);
    return b;
}

void BilateralModel::grow_head(int new_classes) {
    if (new_classes < 1)
        throw InvalidArgument("grow_head needs at least one new class");
    Matrix& w = params_.value(head_w_);
    Matrix& b = params_.value(head_b_);
    const Eigen::Index old = w.rows();
    Matrix w2 = Matrix::Zero(old + new_classes, config_.embed_dim);
    w2.topRows(old) = w;
    Matrix b2 = Matrix::Zero(1, old + new_classes);
    b2.leftCols(old) = b;
    w = std::move(w2);
    b = std::move(b2);
    num_classes_ = static_cast<int>(old + new_classes);
}

std::vector<bool> BilateralModel::slots_with_prefix(const std::string& prefix) const {
    std::vector<bool> mask(params_.size(), false);
    for (int i = 0; i < params_.size(); ++i)
        mask[i] = params_.name(i).rfind(prefix, 0) == 0;
    return mask;
}

std::vector<bool> BilateralModel::detail_branch_mask() const { return slots_with_prefix("detail."); }

Var BilateralModel::run_linear(ParamBinding& p, const LinearSlots& s, Var x) const {
    return ad::linear(x, p(s.w), p(s.b));
}

Var BilateralModel::run_block(ParamBinding& p, const BlockSlots& b, Var x, int visible_keys) const {
    Var h = ad::layer_norm(x, p(b.ln1_g), p(b.ln1_b));
    Var qkv = run_linear(p, b.qkv, h);
    Var att = ad::attention(qkv, config_.heads, visible_keys);
    x = ad::add(x, run_linear(p, b.proj, att));
    h = ad::layer_norm(x, p(b.ln2_g), p(b.ln2_b));
    h = run_linear(p, b.fc2, ad::gelu(run_linear(p, b.fc1, h)));
    return ad::add(x, h);
}

Var BilateralModel::embed_and_mask(ParamBinding& p, const PatchGrid& patches, const MaskPlan& plan) const {
    if (patches.grid_side != config_.grid_side() || patches.patch_dim() != config_.patch_dim())
        throw DimensionError("embed_and_mask: patch grid does not match model geometry");
    if (plan.grid_side != patches.grid_side)
        throw DimensionError("embed_and_mask: mask plan does not match patch grid");
    ad::Graph& g = p.graph();
    const auto n = static_cast<Eigen::Index>(plan.kept_count());
    Matrix visible(n, patches.patch_dim());
    Matrix pos(n, config_.embed_dim);
    for (Eigen::Index k = 0; k < n; ++k) {
        const int flat = plan.flat(static_cast<std::size_t>(k));
        visible.row(k) = patches.patches.row(flat);
        pos.row(k) = pos_.row(flat);
    }
    std::vector<Var> parts{p(cls_token_)};
    if (n > 0) {
        Var emb = run_linear(p, patch_embed_, g.constant(std::move(visible)));
        parts.push_back(ad::add(emb, g.constant(std::move(pos))));
    }
    return ad::concat_rows(parts);
}

Var BilateralModel::shared_stem(ParamBinding& p, Var tokens) const { return run_block(p, encoder_[0], tokens); }

Var BilateralModel::main_branch(ParamBinding& p, Var stem) const {
    Var x = stem;
    for (std::size_t i = 1; i < encoder_.size(); ++i)
        x = run_block(p, encoder_[i], x);
    return ad::layer_norm(x, p(enc_norm_g_), p(enc_norm_b_));
}

Var BilateralModel::detailed_branch(ParamBinding& p, Var stem) const {
    if (!config_.bilateral)
        throw InvalidArgument("detailed branch is disabled in this model");
    Var x = stem;
    for (std::size_t i = 0; i < detail_.size(); ++i) {
        x = run_linear(p, detail_[i], x);
        if (i + 1 < detail_.size())
            x = ad::gelu(x);
    }
    return x;
}

Var BilateralModel::fuse_embeddings(ParamBinding& p, Var main, Var detail, bool attend_to_detail) const {
    Var joint = main;
    int visible = -1;
    if (detail.valid()) {
        if (main.rows() != detail.rows() || main.cols() != detail.cols())
            throw DimensionError("fuse_embeddings: branch outputs differ in shape");
        std::vector<Var> parts{main, detail};
        joint = ad::concat_rows(parts);
        if (!attend_to_detail)
            visible = static_cast<int>(main.rows());
    }
    Var fused = run_block(p, fusion_, joint, visible);
    return ad::layer_norm(ad::slice_rows(fused, 0, 1), p(fusion_norm_g_), p(fusion_norm_b_));
}

Var BilateralModel::classify(ParamBinding& p, Var z) const {
    if (num_classes_ == 0)
        throw InvalidArgument("classifier head has no classes; call grow_head first");
    return ad::add(ad::matmul_nt(z, p(head_w_)), p(head_b_));
}

Var BilateralModel::decode(ParamBinding& p, Var tokens, const MaskPlan& plan) const {
    const int grid = config_.grid_side();
    if (plan.grid_side != grid || tokens.rows() != static_cast<Eigen::Index>(plan.kept_count()) + 1)
        throw DimensionError("decode: token count does not match the mask plan");
    ad::Graph& g = p.graph();
    const auto visible = plan.visibility();
    std::vector<std::pair<int, int>> picks;
    picks.reserve(static_cast<std::size_t>(grid) * grid + 1);
    picks.emplace_back(0, 0);
    int next = 1;
    for (int flat = 0; flat < grid * grid; ++flat)
        picks.emplace_back(visible[flat] ? std::pair{0, next++} : std::pair{1, 0});
    std::vector<Var> sources{tokens, p(mask_token_)};
    Var x = ad::gather_rows(sources, std::move(picks));
    Matrix pos = Matrix::Zero(grid * grid + 1, config_.embed_dim);
    pos.bottomRows(grid * grid) = pos_;
    x = ad::add(x, g.constant(std::move(pos)));
    for (const auto& b : decoder_)
        x = run_block(p, b, x);
    x = ad::layer_norm(x, p(dec_norm_g_), p(dec_norm_b_));
    Var patches = run_linear(p, dec_pred_, ad::slice_rows(x, 1, grid * grid));
    const int s = config_.image_side;
    return ad::permute(patches, config_.channels, static_cast<Eigen::Index>(s) * s, unpatchify_map_);
}

ForwardOutputs BilateralModel::forward(ParamBinding& p, const PatchGrid& patches, const MaskPlan& plan,
                                       const FrequencyFilter& filter) const {
    ForwardOutputs out;
    out.stem = shared_stem(p, embed_and_mask(p, patches, plan));
    out.main_tokens = main_branch(p, out.stem);
    if (config_.bilateral)
        out.detail_tokens = detailed_branch(p, out.stem);
    out.z = fuse_embeddings(p, out.main_tokens, out.detail_tokens);
    out.logits = classify(p, out.z);
    out.main_image = decode(p, out.main_tokens, plan);
    out.reconstruction = out.main_image;
    if (config_.bilateral) {
        out.detail_decoded = decode(p, out.detail_tokens, plan);
        out.detail_image = ad::highpass(out.detail_decoded, filter);
        out.reconstruction = ad::add(out.main_image, out.detail_image);
    }
    return out;
}

ImageTensor BilateralModel::to_image(const Matrix& m) const {
    const int s = config_.image_side;
    if (m.rows() != config_.channels || m.cols() != static_cast<Eigen::Index>(s) * s)
        throw DimensionError("to_image: matrix is not (C, S*S)");
    return ImageTensor(config_.channels, s, std::vector<double>(m.data(), m.data() + m.size()));
}

Matrix BilateralModel::to_matrix(const ImageTensor& image) const {
    return Eigen::Map<const Matrix>(image.pixels().data(), image.channels(),
                                    static_cast<Eigen::Index>(image.side()) * image.side());
}

ImageTensor BilateralModel::reconstruct_main(const ImageTensor& image, const MaskPlan& plan) const {
    ad::Graph g(false);
    ParamBinding p(g, params_);
    const PatchGrid grid = patchify(image, config_.resolved_patch_side());
    Var tokens = main_branch(p, shared_stem(p, embed_and_mask(p, grid, plan)));
    return to_image(decode(p, tokens, plan).value());
}

ImageTensor BilateralModel::reconstruct(const PatchGrid& patches, const MaskPlan& plan,
                                        const FrequencyFilter& filter) const {
    ad::Graph g(false);
    ParamBinding p(g, params_);
    Var stem = shared_stem(p, embed_and_mask(p, patches, plan));
    Var x = decode(p, main_branch(p, stem), plan);
    if (config_.bilateral)
        x = ad::add(x, ad::highpass(decode(p, detailed_branch(p, stem), plan), filter));
    return to_image(x.value());
}

std::vector<double> BilateralModel::embedding(const ImageTensor& image, const MaskPlan& plan) const {
    ad::Graph g(false);
    ParamBinding p(g, params_);
    const PatchGrid grid = patchify(image, config_.resolved_patch_side());
    Var stem = shared_stem(p, embed_and_mask(p, grid, plan));
    Var detail = config_.bilateral ? detailed_branch(p, stem) : Var{};
    const Matrix& z = fuse_embeddings(p, main_branch(p, stem), detail).value();
    return {z.data(), z.data() + z.size()};
}

std::vector<double> BilateralModel::logits(const ImageTensor& image, const MaskPlan& plan) const {
    ad::Graph g(false);
    ParamBinding p(g, params_);
    const PatchGrid grid = patchify(image, config_.resolved_patch_side());
    Var stem = shared_stem(p, embed_and_mask(p, grid, plan));
    Var detail = config_.bilateral ? detailed_branch(p, stem) : Var{};
    const Matrix& l = classify(p, fuse_embeddings(p, main_branch(p, stem), detail)).value();
    return {l.data(), l.data() + l.size()};
}

} // namespace bmae
