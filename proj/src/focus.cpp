#include "countlab/focus.hpp"

#include <algorithm>
#include <cmath>

#include "countlab/common.hpp"

namespace countlab {

std::vector<int> resolve_focus_blocks(const FocusConfig& cfg, int n_layers) {
    std::vector<int> blocks;
    if (cfg.layers.empty()) {
        for (int l = 0; l < n_layers; ++l) blocks.push_back(l);
        return blocks;
    }
    for (int layer : cfg.layers) {
        check_config(layer >= 1 && layer <= n_layers,
                     "focus layer " + std::to_string(layer) + " outside 1.." +
                         std::to_string(n_layers));
        blocks.push_back(layer - 1);
    }
    std::sort(blocks.begin(), blocks.end());
    check_config(std::adjacent_find(blocks.begin(), blocks.end()) == blocks.end(),
                 "duplicate focus layer");
    return blocks;
}

std::vector<int> focus_query_positions(const TokenSequence& seq, bool image_queries) {
    // Positions before the image cannot see any image column; the img_end
    // marker and everything after it can.
    std::vector<int> qs;
    if (image_queries)
        for (int t = seq.first_image_pos; t < seq.last_image_pos; ++t)
            qs.push_back(t);
    for (int t = seq.last_image_pos; t < seq.length(); ++t) qs.push_back(t);
    return qs;
}

double focus_layer_term(const std::vector<Eigen::MatrixXd>& attn_heads,
                        const Eigen::VectorXd& prior,
                        const std::vector<int>& query_positions, int first_image_pos,
                        int n_image_tokens, double eps,
                        std::vector<Eigen::MatrixXd>* d_attn, double grad_scale) {
    check_contract(!attn_heads.empty(), "no attention heads given");
    check_contract(prior.size() == n_image_tokens, "prior length != image tokens");
    int nh = static_cast<int>(attn_heads.size());
    double inv_h = 1.0 / nh;

    double total = 0;
    Eigen::VectorXd num(n_image_tokens), q(n_image_tokens), v(n_image_tokens);
    for (int t : query_positions) {
        num.setZero();
        for (int h = 0; h < nh; ++h)
            num += attn_heads[static_cast<std::size_t>(h)]
                       .row(t)
                       .segment(first_image_pos, n_image_tokens)
                       .transpose();
        num *= inv_h;
        double z = num.sum();
        check_numeric(z > 0, "query position sees no image column");
        q = num / z;
        double term = 0;
        for (int j = 0; j < n_image_tokens; ++j)
            term -= prior[j] * std::log(q[j] + eps);
        total += term;

        if (d_attn != nullptr) {
            // d(term)/d(num_j) = (v_j - sum_k q_k v_k) / z with v_j = -g_j/(q_j+eps),
            // spread evenly across heads through the head average.
            for (int j = 0; j < n_image_tokens; ++j) v[j] = -prior[j] / (q[j] + eps);
            double vq = q.dot(v);
            double coef = grad_scale * inv_h / z;
            for (int h = 0; h < nh; ++h)
                (*d_attn)[static_cast<std::size_t>(h)]
                    .row(t)
                    .segment(first_image_pos, n_image_tokens) +=
                    (coef * (v.array() - vq)).matrix().transpose();
        }
    }
    return total;
}

double focus_loss(const ActivationTrace& trace, const TokenSequence& seq,
                  const Eigen::VectorXd& prior, const FocusConfig& cfg) {
    check_contract(!trace.attn.empty(), "focus loss needs captured attention");
    std::vector<int> blocks =
        resolve_focus_blocks(cfg, static_cast<int>(trace.attn.size()));
    std::vector<int> qs = focus_query_positions(seq, cfg.image_queries);
    check_contract(!qs.empty(), "empty focus query set");
    double total = 0;
    for (int b : blocks)
        total += focus_layer_term(trace.attn[static_cast<std::size_t>(b)], prior, qs,
                                  seq.first_image_pos, seq.n_image_tokens(), cfg.eps);
    return total / (static_cast<double>(blocks.size()) * qs.size());
}

}  // namespace countlab
