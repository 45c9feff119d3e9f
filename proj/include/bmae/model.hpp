// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The bmae Authors

#pragma once

#include <string>
#include <vector>

#include "bmae/autodiff.hpp"
#include "bmae/common.hpp"
#include "bmae/frequency.hpp"
#include "bmae/image.hpp"
#include "bmae/patch_codec.hpp"

namespace bmae {

struct ModelConfig {
    int embed_dim = 384;
    int encoder_blocks = 5;
    int decoder_blocks = 1;
    int heads = 12;
    /// 0 selects 16 for images of side >= 224 and 4 otherwise.
    int patch_side = 0;
    /// Hidden width of the MLP sublayer in encoder and fusion blocks.
    int mlp_hidden = 1536;
    int decoder_mlp_hidden = 1536;
    int detailed_mlp_layers = 3;
    /// Width of the detailed branch; 0 means embed_dim.
    int detailed_mlp_hidden = 0;
    int image_side = 32;
    int channels = 3;
    /// false disables the detailed branch: no fusion input from it and no
    /// image-level residual (a plain supervised MAE).
    bool bilateral = true;

    int resolved_patch_side() const noexcept {
        return patch_side > 0 ? patch_side : (image_side >= 224 ? 16 : 4);
    }
    int resolved_detail_hidden() const noexcept {
        return detailed_mlp_hidden > 0 ? detailed_mlp_hidden : embed_dim;
    }
    int grid_side() const noexcept { return image_side / resolved_patch_side(); }
    int patch_dim() const noexcept {
        const int p = resolved_patch_side();
        return p * p * channels;
    }

    /// Throws ConfigError on inconsistent geometry.
    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

/// Named, ordered collection of trainable matrices.
class ParameterSet {
public:
    int add(std::string name, Matrix value);
    int find(const std::string& name) const; // -1 if absent
    int size() const noexcept { return static_cast<int>(values_.size()); }
    Matrix& value(int i) { return values_[i]; }
    const Matrix& value(int i) const { return values_[i]; }
    const std::string& name(int i) const { return names_[i]; }
    std::size_t scalar_count() const;

    bool operator==(const ParameterSet&) const = default;

private:
    std::vector<std::string> names_;
    std::vector<Matrix> values_;
};

/// Binds parameter slots to graph leaves, creating each leaf once per graph.
/// Frozen slots (and every slot of a non-recording graph) become constants.
class ParamBinding {
public:
    ParamBinding(ad::Graph& graph, const ParameterSet& params, const std::vector<bool>* frozen = nullptr);
    ad::Var operator()(int slot);
    ad::Graph& graph() noexcept { return graph_; }

private:
    ad::Graph& graph_;
    const ParameterSet& params_;
    const std::vector<bool>* frozen_;
    std::vector<ad::Var> cache_;
};

/// Graph outputs of one bilateral forward pass.
struct ForwardOutputs {
    ad::Var stem;            // f: (N+1, D)
    ad::Var main_tokens;     // (N+1, D)
    ad::Var detail_tokens;   // (N+1, D), invalid when not bilateral
    ad::Var z;               // (1, D)
    ad::Var logits;          // (1, classes)
    ad::Var main_image;      // x':  (C, S*S)
    ad::Var detail_decoded;  // D(H(f)): (C, S*S), invalid when not bilateral
    ad::Var detail_image;    // x'' = ifft2(M(D(H(f))))
    ad::Var reconstruction;  // x^ = x' + x''
};

/// Two-branch masked autoencoder with a growing linear classifier.
///
/// Encoder input is the class token followed by the embedded visible patches
/// (plus fixed 2D sine-cosine positional encodings of their grid positions).
/// The first encoder block is shared; its output feeds both the remaining
/// encoder blocks (main branch) and a token-wise MLP (detailed branch). One
/// transformer block over the concatenated token sequences fuses the branches
/// and its class-token output is the embedding z. The decoder is shared by
/// both branches.
class BilateralModel {
public:
    BilateralModel(ModelConfig config, std::uint64_t init_seed);

    const ModelConfig& config() const noexcept { return config_; }
    ParameterSet& parameters() noexcept { return params_; }
    const ParameterSet& parameters() const noexcept { return params_; }
    int num_classes() const noexcept { return num_classes_; }
    const Matrix& positional_encoding() const noexcept { return pos_; }

    /// Appends zero-initialized classifier rows; existing rows are untouched.
    void grow_head(int new_classes);

    /// Slots belonging to the detailed branch (H). Used to freeze it.
    std::vector<bool> detail_branch_mask() const;
    /// Slots whose names start with `prefix`.
    std::vector<bool> slots_with_prefix(const std::string& prefix) const;

    // Graph-building stages.
    ad::Var embed_and_mask(ParamBinding& p, const PatchGrid& patches, const MaskPlan& plan) const;
    ad::Var shared_stem(ParamBinding& p, ad::Var tokens) const;
    ad::Var main_branch(ParamBinding& p, ad::Var stem) const;
    ad::Var detailed_branch(ParamBinding& p, ad::Var stem) const;
    /// Attends over [main; detail] and reads out the main class token.
    /// `attend_to_detail = false` masks the detail tokens out as keys.
    ad::Var fuse_embeddings(ParamBinding& p, ad::Var main, ad::Var detail, bool attend_to_detail = true) const;
    ad::Var classify(ParamBinding& p, ad::Var z) const;
    ad::Var decode(ParamBinding& p, ad::Var tokens, const MaskPlan& plan) const;

    /// Full bilateral pass (classification and image-level fusion).
    ForwardOutputs forward(ParamBinding& p, const PatchGrid& patches, const MaskPlan& plan,
                           const FrequencyFilter& filter) const;

    // Value-only conveniences (no gradients).
    /// D(F(mask(x))): main branch only.
    ImageTensor reconstruct_main(const ImageTensor& image, const MaskPlan& plan) const;
    /// Bilateral reconstruction x' + x'' from the visible patches in `patches`.
    ImageTensor reconstruct(const PatchGrid& patches, const MaskPlan& plan, const FrequencyFilter& filter) const;
    std::vector<double> embedding(const ImageTensor& image, const MaskPlan& plan) const;
    std::vector<double> logits(const ImageTensor& image, const MaskPlan& plan) const;

    /// Maps a (C, S*S) graph matrix to an image.
    ImageTensor to_image(const Matrix& m) const;
    Matrix to_matrix(const ImageTensor& image) const;

private:
    struct LinearSlots {
        int w = -1;
        int b = -1;
    };
    struct BlockSlots {
        int ln1_g = -1, ln1_b = -1;
        LinearSlots qkv, proj;
        int ln2_g = -1, ln2_b = -1;
        LinearSlots fc1, fc2;
    };

    LinearSlots add_linear(const std::string& name, int in, int out, Rng& rng, bool zero = false);
    BlockSlots add_block(const std::string& name, int dim, int hidden, Rng& rng);
    ad::Var run_linear(ParamBinding& p, const LinearSlots& s, ad::Var x) const;
    ad::Var run_block(ParamBinding& p, const BlockSlots& b, ad::Var x, int visible_keys = -1) const;

    ModelConfig config_;
    ParameterSet params_;
    int num_classes_ = 0;
    Matrix pos_; // (N_f, D) fixed positional encoding
    std::vector<int> unpatchify_map_;

    LinearSlots patch_embed_;
    int cls_token_ = -1;
    std::vector<BlockSlots> encoder_;
    int enc_norm_g_ = -1, enc_norm_b_ = -1;
    std::vector<LinearSlots> detail_;
    BlockSlots fusion_;
    int fusion_norm_g_ = -1, fusion_norm_b_ = -1;
    int mask_token_ = -1;
    std::vector<BlockSlots> decoder_;
    int dec_norm_g_ = -1, dec_norm_b_ = -1;
    LinearSlots dec_pred_;
    int head_w_ = -1, head_b_ = -1;
};

/// Fixed 2D sine-cosine positional table of shape (grid_side^2, dim).
Matrix sincos_positional_encoding(int grid_side, int dim);

/// Reinitializes every parameter with N(0, stddev); used to make gradient
/// checks exercise every path (including zero-initialized layers).
void randomize_parameters(ParameterSet& params, double stddev, Rng& rng);

} // namespace bmae
