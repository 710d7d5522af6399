#include "countlab/forward.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "countlab/common.hpp"
#include "forward_internal.hpp"

namespace countlab {

void rmsnorm_rows_cached(const Eigen::MatrixXd& x, const Eigen::VectorXd& gain,
                         Eigen::MatrixXd& out, Eigen::VectorXd& inv_rms) {
    int n = static_cast<int>(x.rows()), d = static_cast<int>(x.cols());
    out.resize(n, d);
    inv_rms.resize(n);
    for (int i = 0; i < n; ++i) {
        double ms = x.row(i).squaredNorm() / d;
        double ir = 1.0 / std::sqrt(ms + kNormEps);
        inv_rms[i] = ir;
        out.row(i) = (x.row(i) * ir).cwiseProduct(gain.transpose());
    }
}

Eigen::MatrixXd rmsnorm_rows(const Eigen::MatrixXd& x, const Eigen::VectorXd& gain) {
    Eigen::MatrixXd out;
    Eigen::VectorXd ir;
    rmsnorm_rows_cached(x, gain, out, ir);
    return out;
}

double gelu(double x) {
    constexpr double a = 0.7978845608028654;  // sqrt(2/pi)
    constexpr double b = 0.044715;
    return 0.5 * x * (1.0 + std::tanh(a * (x + b * x * x * x)));
}

double gelu_grad(double x) {
    constexpr double a = 0.7978845608028654;
    constexpr double b = 0.044715;
    double u = a * (x + b * x * x * x);
    double t = std::tanh(u);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * a * (1.0 + 3.0 * b * x * x);
}

Eigen::VectorXd softmax(const Eigen::VectorXd& z) {
    Eigen::VectorXd e = (z.array() - z.maxCoeff()).exp();
    return e / e.sum();
}

std::vector<int> top_k_indices(const Eigen::VectorXd& v, int k) {
    std::vector<int> idx(static_cast<std::size_t>(v.size()));
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        if (v[a] != v[b]) return v[a] > v[b];
        return a < b;
    });
    if (static_cast<int>(idx.size()) > k) idx.resize(static_cast<std::size_t>(k));
    return idx;
}

namespace {

void apply_resid_override(const OverrideSet& ov, int level, Eigen::MatrixXd& x) {
    auto it = ov.resid.find(level);
    if (it == ov.resid.end()) return;
    for (const auto& [token, value] : it->second) {
        check_contract(token >= 0 && token < x.rows(),
                       "residual override token out of range");
        check_contract(value.size() == x.cols(),
                       "residual override has wrong width");
        x.row(token) = value.transpose();
    }
}

}  // namespace

void run_forward(const Params& params, const TokenSequence& seq,
                 const OverrideSet& overrides, ForwardCache& fc, bool keep_scores) {
    const ModelConfig& cfg = params.cfg;
    int n = seq.length();
    int d = cfg.d_model;
    int dh = cfg.d_head();
    int nh = cfg.n_heads;
    check_contract(n <= cfg.max_seq, "sequence longer than max_seq");
    check_contract(seq.n_image_tokens() == cfg.image_tokens(),
                   "sequence image grid does not match the model");
    check_contract(seq.patch_dim == cfg.patch_dim(),
                   "patch payload width does not match the model");

    // Embeddings: token + position, plus the patch projection on image tokens.
    fc.patch_mat = seq.patch_matrix();
    fc.x0.resize(n, d);
    for (int i = 0; i < n; ++i) {
        int t = seq.tokens[static_cast<std::size_t>(i)];
        check_contract(t >= 0 && t < cfg.vocab_size, "token id outside vocab");
        fc.x0.row(i) = params.tok_embed.row(t) + params.pos_embed.row(i);
    }
    fc.x0.middleRows(seq.first_image_pos, seq.n_image_tokens()) +=
        fc.patch_mat * params.patch_embed;
    apply_resid_override(overrides, 0, fc.x0);

    double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    double neg_inf = -std::numeric_limits<double>::infinity();

    fc.layers.assign(static_cast<std::size_t>(cfg.n_layers), LayerCache{});
    if (keep_scores) fc.scores.assign(static_cast<std::size_t>(cfg.n_layers), {});
    const Eigen::MatrixXd* x_prev = &fc.x0;

    for (int l = 0; l < cfg.n_layers; ++l) {
        LayerCache& lc = fc.layers[static_cast<std::size_t>(l)];
        const LayerParams& lp = params.layers[static_cast<std::size_t>(l)];
        if (&lc.x_in != x_prev) lc.x_in = *x_prev;

        rmsnorm_rows_cached(lc.x_in, lp.ln1_g, lc.n1, lc.ir1);
        lc.q = lc.n1 * lp.wq;
        lc.k = lc.n1 * lp.wk;
        lc.v = lc.n1 * lp.wv;

        lc.attn.resize(static_cast<std::size_t>(nh));
        lc.head_out.resize(static_cast<std::size_t>(nh));
        lc.head_overridden.assign(static_cast<std::size_t>(nh), 0);
        lc.head_beta.assign(static_cast<std::size_t>(nh), 1.0);
        lc.head_scale.assign(static_cast<std::size_t>(nh), 1.0);
        lc.concat.resize(n, d);
        if (keep_scores) fc.scores[static_cast<std::size_t>(l)].resize(
            static_cast<std::size_t>(nh));

        for (int h = 0; h < nh; ++h) {
            auto qh = lc.q.middleCols(h * dh, dh);
            auto kh = lc.k.middleCols(h * dh, dh);
            auto vh = lc.v.middleCols(h * dh, dh);

            double beta = 1.0;
            if (auto it = overrides.beta.find({l, h}); it != overrides.beta.end())
                beta = it->second;
            lc.head_beta[static_cast<std::size_t>(h)] = beta;

            Eigen::MatrixXd s = (qh * kh.transpose()) * (inv_sqrt_dh * beta);
            for (int i = 0; i < n; ++i)
                for (int j = i + 1; j < n; ++j) s(i, j) = neg_inf;

            Eigen::MatrixXd& a = lc.attn[static_cast<std::size_t>(h)];
            a = Eigen::MatrixXd::Zero(n, n);
            for (int i = 0; i < n; ++i) {
                auto seg = s.row(i).head(i + 1);
                double m = seg.maxCoeff();
                Eigen::ArrayXd e = (seg.transpose().array() - m).exp();
                a.row(i).head(i + 1) = (e / e.sum()).transpose();
            }
            if (keep_scores)
                fc.scores[static_cast<std::size_t>(l)][static_cast<std::size_t>(h)] =
                    std::move(s);

            Eigen::MatrixXd& out = lc.head_out[static_cast<std::size_t>(h)];
            out = a * vh;
            if (auto it = overrides.head_out.find({l, h});
                it != overrides.head_out.end()) {
                check_contract(it->second.rows() == n && it->second.cols() == dh,
                               "head output override has wrong shape");
                out = it->second;
                lc.head_overridden[static_cast<std::size_t>(h)] = 1;
            }
            if (auto it = overrides.out_scale.find({l, h});
                it != overrides.out_scale.end()) {
                if (it->second != 1.0) out *= it->second;
                lc.head_scale[static_cast<std::size_t>(h)] = it->second;
            }
            lc.concat.middleCols(h * dh, dh) = out;
        }

        lc.attn_out = lc.concat * lp.wo;
        lc.x_mid = lc.x_in + lc.attn_out;
        rmsnorm_rows_cached(lc.x_mid, lp.ln2_g, lc.n2, lc.ir2);
        lc.m1 = lc.n2 * lp.w1;
        lc.h1 = lc.m1.unaryExpr([](double x) { return gelu(x); });
        lc.mlp_out = lc.h1 * lp.w2;

        Eigen::MatrixXd x_out = lc.x_mid + lc.mlp_out;
        apply_resid_override(overrides, l + 1, x_out);
        if (l + 1 == cfg.n_layers) {
            fc.x_final = std::move(x_out);
            x_prev = &fc.x_final;
        } else {
            // stash in the next layer's x_in slot on the following iteration
            fc.layers[static_cast<std::size_t>(l + 1)].x_in = std::move(x_out);
            x_prev = &fc.layers[static_cast<std::size_t>(l + 1)].x_in;
        }
    }

    rmsnorm_rows_cached(fc.x_final, params.final_g, fc.nf, fc.irf);
    fc.logits = fc.nf * params.unembed.transpose();
    fc.logits.rowwise() += params.unembed_b.transpose();
}

ActivationTrace forward(const Params& params, const TokenSequence& seq,
                        const OverrideSet& overrides, const CaptureFlags& capture) {
    ForwardCache fc;
    run_forward(params, seq, overrides, fc, capture.scores);
    ActivationTrace tr;
    int L = params.cfg.n_layers;
    if (capture.residuals) {
        tr.resid.reserve(static_cast<std::size_t>(L) + 1);
        tr.resid.push_back(fc.x0);
        for (int l = 1; l < L; ++l)
            tr.resid.push_back(fc.layers[static_cast<std::size_t>(l)].x_in);
        tr.resid.push_back(fc.x_final);
    }
    if (capture.attention) {
        tr.attn.resize(static_cast<std::size_t>(L));
        for (int l = 0; l < L; ++l)
            tr.attn[static_cast<std::size_t>(l)] =
                fc.layers[static_cast<std::size_t>(l)].attn;
    }
    if (capture.head_outputs) {
        tr.head_out.resize(static_cast<std::size_t>(L));
        for (int l = 0; l < L; ++l)
            tr.head_out[static_cast<std::size_t>(l)] =
                fc.layers[static_cast<std::size_t>(l)].head_out;
    }
    if (capture.attn_out) {
        tr.attn_out.resize(static_cast<std::size_t>(L));
        for (int l = 0; l < L; ++l)
            tr.attn_out[static_cast<std::size_t>(l)] =
                fc.layers[static_cast<std::size_t>(l)].attn_out;
    }
    if (capture.mlp_out) {
        tr.mlp_out.resize(static_cast<std::size_t>(L));
        for (int l = 0; l < L; ++l)
            tr.mlp_out[static_cast<std::size_t>(l)] =
                fc.layers[static_cast<std::size_t>(l)].mlp_out;
    }
    if (capture.scores) tr.scores = std::move(fc.scores);
    tr.logits = std::move(fc.logits);
    return tr;
}

double loss_sft_from_logits(const Eigen::MatrixXd& logits,
                            const std::vector<std::pair<int, int>>& answer_targets) {
    check_contract(!answer_targets.empty(), "no answer targets to score");
    double total = 0;
    for (auto [pos, target] : answer_targets) {
        check_contract(pos >= 0 && pos < logits.rows(), "answer position out of range");
        check_contract(target >= 0 && target < logits.cols(),
                       "answer target outside vocab");
        Eigen::VectorXd row = logits.row(pos);
        double m = row.maxCoeff();
        double lse = m + std::log((row.array() - m).exp().sum());
        total += lse - row[target];
    }
    return total / static_cast<double>(answer_targets.size());
}

double loss_sft(const Params& params, const TokenSequence& seq) {
    ActivationTrace tr = forward(params, seq);
    return loss_sft_from_logits(tr.logits, seq.answer_targets);
}

int generate_answer(const Params& params, const TokenSequence& prompt_only,
                    const OverrideSet& overrides) {
    check_contract(prompt_only.answer_targets.empty(),
                   "generation expects a prompt-only sequence");
    ActivationTrace tr = forward(params, prompt_only, overrides);
    Eigen::Index best = 0;
    tr.logits.row(prompt_only.last_prompt_pos).maxCoeff(&best);
    return static_cast<int>(best);
}

Eigen::VectorXd unembed_residual(const Params& params, const Eigen::VectorXd& resid) {
    double ms = resid.squaredNorm() / static_cast<double>(resid.size());
    Eigen::VectorXd nf =
        (resid / std::sqrt(ms + kNormEps)).cwiseProduct(params.final_g);
    return params.unembed * nf + params.unembed_b;
}

}  // namespace countlab
