#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "countlab/scene.hpp"
#include "countlab/vocab.hpp"

namespace countlab {

struct ModelConfig {
    int n_layers = 6;
    int n_heads = 4;
    int d_model = 64;
    int mlp_mult = 4;
    int vocab_size = 0;
    int max_seq = 0;
    int patch_px = 8;
    int canvas_px = 64;
    int channels = 3;  // grayscale scenes are replicated to RGB

    int d_head() const { return d_model / n_heads; }
    int d_mlp() const { return d_model * mlp_mult; }
    int patch_dim() const { return patch_px * patch_px * channels; }
    int grid() const { return canvas_px / patch_px; }
    int image_tokens() const { return grid() * grid(); }
    void validate() const;

    // Fills vocab_size/max_seq for the given vocabulary and canvas.
    static ModelConfig toy(const Vocab& vocab, const CanvasSpec& spec);
    bool operator==(const ModelConfig&) const = default;
};

struct LayerParams {
    Eigen::MatrixXd wq, wk, wv, wo;  // d_model x d_model, y = x * W
    Eigen::MatrixXd w1, w2;          // d_model x d_mlp, d_mlp x d_model
    Eigen::VectorXd ln1_g, ln2_g;    // pre-norm gains
};

struct Params {
    ModelConfig cfg;
    Eigen::MatrixXd tok_embed;    // vocab x d_model
    Eigen::MatrixXd pos_embed;    // max_seq x d_model
    Eigen::MatrixXd patch_embed;  // patch_dim x d_model
    std::vector<LayerParams> layers;
    Eigen::VectorXd final_g;
    Eigen::MatrixXd unembed;      // vocab x d_model
    Eigen::VectorXd unembed_b;    // vocab

    // W_O row block carrying head h's contribution (d_head x d_model).
    Eigen::Block<const Eigen::MatrixXd> wo_head(int layer, int head) const {
        const auto& wo = layers[static_cast<std::size_t>(layer)].wo;
        return wo.middleRows(head * cfg.d_head(), cfg.d_head());
    }
};

Params init_params(const ModelConfig& cfg, std::uint64_t seed);
// Same shapes, all zeros; used for gradients and optimizer moments.
Params zero_like(const Params& p);

struct TensorRef {
    std::string name;
    double* data;
    std::size_t size;
    std::vector<std::uint32_t> dims;
};
std::vector<TensorRef> tensor_refs(Params& p);

// Binary checkpoint: magic, version, config ints, named float32 tensors,
// all little-endian, plus a <path>.json sidecar (optimizer state, seed).
void save_checkpoint(const Params& p, const std::string& path,
                     const std::string& sidecar_json);
Params load_checkpoint(const std::string& path, std::string* sidecar_json = nullptr);

}  // namespace countlab
