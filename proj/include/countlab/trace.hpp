#pragma once

#include <Eigen/Core>
#include <map>
#include <utility>
#include <vector>

namespace countlab {

struct CaptureFlags {
    bool residuals = false;     // levels 0..L (embeddings, then each block output)
    bool attention = false;     // post-softmax weights per layer/head
    bool head_outputs = false;  // per-head outputs before W_O (post override/scale)
    bool attn_out = false;      // summed attention contribution after W_O
    bool mlp_out = false;
    bool scores = false;        // pre-softmax attention logits (scaled, masked)

    static CaptureFlags all() { return {true, true, true, true, true, true}; }
};

// Keys use 0-based block indices. Residual levels: level 0 is the embedding
// output, level l >= 1 the output of block l; an override replaces that state
// for everything downstream.
struct OverrideSet {
    std::map<int, std::map<int, Eigen::VectorXd>> resid;          // level -> token -> value
    std::map<std::pair<int, int>, Eigen::MatrixXd> head_out;      // (block, head) -> seq x d_head
    std::map<std::pair<int, int>, double> beta;                   // attention logit multiplier
    std::map<std::pair<int, int>, double> out_scale;              // head contribution factor

    bool empty() const {
        return resid.empty() && head_out.empty() && beta.empty() && out_scale.empty();
    }
};

struct ActivationTrace {
    std::vector<Eigen::MatrixXd> resid;                  // [L+1] seq x d_model
    std::vector<std::vector<Eigen::MatrixXd>> attn;      // [L][H] seq x seq
    std::vector<std::vector<Eigen::MatrixXd>> head_out;  // [L][H] seq x d_head
    std::vector<Eigen::MatrixXd> attn_out;               // [L] seq x d_model
    std::vector<Eigen::MatrixXd> mlp_out;                // [L] seq x d_model
    std::vector<std::vector<Eigen::MatrixXd>> scores;    // [L][H] seq x seq
    Eigen::MatrixXd logits;                              // seq x vocab, always set
};

}  // namespace countlab
