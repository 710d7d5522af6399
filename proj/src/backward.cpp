#include "countlab/backward.hpp"

#include <cmath>

#include "countlab/common.hpp"
#include "countlab/forward.hpp"
#include "forward_internal.hpp"

namespace countlab {

namespace {

// y_i = (x_i * ir_i) .* g per row; accumulates dx and dg from dy.
void rmsnorm_backward(const Eigen::MatrixXd& x, const Eigen::VectorXd& ir,
                      const Eigen::VectorXd& g, const Eigen::MatrixXd& dy,
                      Eigen::MatrixXd& dx, Eigen::VectorXd& dg) {
    int n = static_cast<int>(x.rows());
    double d = static_cast<double>(x.cols());
    for (int i = 0; i < n; ++i) {
        double iri = ir[i];
        dg.noalias() += (dy.row(i).cwiseProduct(x.row(i)) * iri).transpose();
        Eigen::RowVectorXd u = dy.row(i).cwiseProduct(g.transpose());
        double c = u.dot(x.row(i)) * iri * iri * iri / d;
        dx.row(i) += iri * u - c * x.row(i);
    }
}

// Rows replaced by an override at this residual level received a constant;
// nothing flows through them to the producing path.
void cut_override_rows(const OverrideSet& ov, int level, Eigen::MatrixXd& d) {
    auto it = ov.resid.find(level);
    if (it == ov.resid.end()) return;
    for (const auto& [token, value] : it->second) d.row(token).setZero();
}

}  // namespace

LossBreakdown backward(const Params& params, const TokenSequence& seq,
                       const FocusSpec* focus, Params& grads,
                       const OverrideSet& overrides) {
    const ModelConfig& cfg = params.cfg;
    ForwardCache fc;
    run_forward(params, seq, overrides, fc, /*keep_scores=*/false);

    int n = seq.length();
    int d = cfg.d_model;
    int dh = cfg.d_head();
    int nh = cfg.n_heads;

    LossBreakdown out;
    out.sft = loss_sft_from_logits(fc.logits, seq.answer_targets);

    bool use_focus = focus != nullptr && focus->cfg.lambda != 0.0;
    std::vector<char> is_focus_block(static_cast<std::size_t>(cfg.n_layers), 0);
    std::vector<int> focus_qs;
    double focus_grad_scale = 0, focus_pair_count = 0;
    if (use_focus) {
        std::vector<int> blocks = resolve_focus_blocks(focus->cfg, cfg.n_layers);
        focus_qs = focus_query_positions(seq, focus->cfg.image_queries);
        check_contract(!focus_qs.empty(), "empty focus query set");
        for (int b : blocks) is_focus_block[static_cast<std::size_t>(b)] = 1;
        focus_pair_count = static_cast<double>(blocks.size()) * focus_qs.size();
        focus_grad_scale = focus->cfg.lambda / focus_pair_count;
    }

    // Answer-token cross entropy -> unembedding and the final residual.
    double inv_targets = 1.0 / static_cast<double>(seq.answer_targets.size());
    Eigen::MatrixXd d_nf = Eigen::MatrixXd::Zero(n, d);
    for (auto [pos, target] : seq.answer_targets) {
        Eigen::VectorXd p = softmax(fc.logits.row(pos).transpose());
        p *= inv_targets;
        p[target] -= inv_targets;
        grads.unembed.noalias() += p * fc.nf.row(pos);
        grads.unembed_b += p;
        d_nf.row(pos).noalias() += p.transpose() * params.unembed;
    }

    Eigen::MatrixXd d_x = Eigen::MatrixXd::Zero(n, d);
    rmsnorm_backward(fc.x_final, fc.irf, params.final_g, d_nf, d_x, grads.final_g);

    double focus_term_sum = 0;
    for (int l = cfg.n_layers - 1; l >= 0; --l) {
        const LayerCache& lc = fc.layers[static_cast<std::size_t>(l)];
        LayerParams& gl = grads.layers[static_cast<std::size_t>(l)];
        const LayerParams& lp = params.layers[static_cast<std::size_t>(l)];
        cut_override_rows(overrides, l + 1, d_x);

        // MLP branch: x_out = x_mid + gelu(n2 W1) W2.
        gl.w2.noalias() += lc.h1.transpose() * d_x;
        Eigen::MatrixXd d_h1 = d_x * lp.w2.transpose();
        Eigen::MatrixXd d_m1 =
            d_h1.cwiseProduct(lc.m1.unaryExpr([](double v) { return gelu_grad(v); }));
        gl.w1.noalias() += lc.n2.transpose() * d_m1;
        Eigen::MatrixXd d_n2 = d_m1 * lp.w1.transpose();
        rmsnorm_backward(lc.x_mid, lc.ir2, lp.ln2_g, d_n2, d_x, gl.ln2_g);

        // Attention branch: x_mid = x_in + concat(head outputs) W_O.
        gl.wo.noalias() += lc.concat.transpose() * d_x;
        Eigen::MatrixXd d_concat = d_x * lp.wo.transpose();

        std::vector<Eigen::MatrixXd> d_attn(
            static_cast<std::size_t>(nh), Eigen::MatrixXd::Zero(n, n));
        if (use_focus && is_focus_block[static_cast<std::size_t>(l)])
            focus_term_sum += focus_layer_term(
                lc.attn, focus->prior, focus_qs, seq.first_image_pos,
                seq.n_image_tokens(), focus->cfg.eps, &d_attn, focus_grad_scale);

        Eigen::MatrixXd d_q(n, d), d_k(n, d), d_v(n, d);
        d_v.setZero();
        double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
        for (int h = 0; h < nh; ++h) {
            std::size_t hs = static_cast<std::size_t>(h);
            const Eigen::MatrixXd& a = lc.attn[hs];
            auto vh = lc.v.middleCols(h * dh, dh);
            Eigen::MatrixXd d_out = d_concat.middleCols(h * dh, dh);
            if (lc.head_scale[hs] != 1.0) d_out *= lc.head_scale[hs];

            Eigen::MatrixXd& da = d_attn[hs];
            if (!lc.head_overridden[hs]) {
                da.noalias() += d_out * vh.transpose();
                d_v.middleCols(h * dh, dh).noalias() += a.transpose() * d_out;
            }

            // Row softmax with causal support [0..i].
            Eigen::MatrixXd ds(n, n);
            for (int i = 0; i < n; ++i) {
                auto ai = a.row(i).head(i + 1);
                auto dai = da.row(i).head(i + 1);
                double dot = ai.dot(dai);
                ds.row(i).head(i + 1).array() = ai.array() * (dai.array() - dot);
                ds.row(i).tail(n - i - 1).setZero();
            }
            double c = lc.head_beta[hs] * inv_sqrt_dh;
            d_q.middleCols(h * dh, dh).noalias() =
                c * (ds * lc.k.middleCols(h * dh, dh));
            d_k.middleCols(h * dh, dh).noalias() =
                c * (ds.transpose() * lc.q.middleCols(h * dh, dh));
        }

        gl.wq.noalias() += lc.n1.transpose() * d_q;
        gl.wk.noalias() += lc.n1.transpose() * d_k;
        gl.wv.noalias() += lc.n1.transpose() * d_v;
        Eigen::MatrixXd d_n1 = d_q * lp.wq.transpose() + d_k * lp.wk.transpose() +
                               d_v * lp.wv.transpose();
        rmsnorm_backward(lc.x_in, lc.ir1, lp.ln1_g, d_n1, d_x, gl.ln1_g);
    }

    cut_override_rows(overrides, 0, d_x);
    for (int i = 0; i < n; ++i) {
        grads.tok_embed.row(seq.tokens[static_cast<std::size_t>(i)]) += d_x.row(i);
        grads.pos_embed.row(i) += d_x.row(i);
    }
    grads.patch_embed.noalias() +=
        fc.patch_mat.transpose() *
        d_x.middleRows(seq.first_image_pos, seq.n_image_tokens());

    if (use_focus) out.focus = focus_term_sum / focus_pair_count;
    out.total = out.sft + (focus != nullptr ? focus->cfg.lambda * out.focus : 0.0);
    return out;
}

}  // namespace countlab
