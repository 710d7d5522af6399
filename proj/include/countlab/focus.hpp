#pragma once

#include <Eigen/Core>
#include <vector>

#include "countlab/sequence.hpp"
#include "countlab/trace.hpp"

namespace countlab {

// Attention-focus objective: selected layers' head-averaged attention from
// text-side query positions, renormalized over the image columns, is pulled
// toward the scene's focus prior with a cross-entropy term.
struct FocusConfig {
    std::vector<int> layers;  // 1-based layer numbers; empty means every layer
    double sigma = 1.0;       // prior width in patch units
    double lambda = 1.0;      // weight against the answer loss
    double eps = 1e-8;        // inside the log
    bool image_queries = false;
};

// 1-based layer list -> validated 0-based block indices.
std::vector<int> resolve_focus_blocks(const FocusConfig& cfg, int n_layers);

// Query set: every position after the image block; optionally the image
// positions themselves as well.
std::vector<int> focus_query_positions(const TokenSequence& seq, bool image_queries);

// Sum over query positions of -sum_j g(j) * log(q_t(j) + eps), where q_t is the
// head-averaged attention row renormalized over image columns. When d_attn is
// given, grad_scale * d(term)/d(attention) is accumulated into it per head.
double focus_layer_term(const std::vector<Eigen::MatrixXd>& attn_heads,
                        const Eigen::VectorXd& prior,
                        const std::vector<int>& query_positions, int first_image_pos,
                        int n_image_tokens, double eps,
                        std::vector<Eigen::MatrixXd>* d_attn = nullptr,
                        double grad_scale = 1.0);

// Mean term over the configured layers and query positions (unweighted by
// lambda). Needs trace.attn captured.
double focus_loss(const ActivationTrace& trace, const TokenSequence& seq,
                  const Eigen::VectorXd& prior, const FocusConfig& cfg);

}  // namespace countlab
