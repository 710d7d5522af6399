#include "countlab/lens.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "countlab/common.hpp"
#include "countlab/forward.hpp"

namespace countlab {

namespace {

Eigen::VectorXd log_softmax(const Eigen::VectorXd& z) {
    double m = z.maxCoeff();
    double lse = m + std::log((z.array() - m).exp().sum());
    return z.array() - lse;
}

}  // namespace

int logit_rank(const Eigen::VectorXd& logits, int token) {
    check_contract(token >= 0 && token < logits.size(), "token outside vocab");
    int rank = 1;
    double ref = logits[token];
    for (Eigen::Index j = 0; j < logits.size(); ++j)
        if (logits[j] > ref) ++rank;
    return rank;
}

LensCurve logit_lens(const Params& params, const ActivationTrace& trace,
                     int position, int token) {
    check_contract(!trace.resid.empty(), "logit lens needs captured residuals");
    LensCurve curve;
    for (const Eigen::MatrixXd& r : trace.resid) {
        check_contract(position >= 0 && position < r.rows(),
                       "lens position out of range");
        Eigen::VectorXd z = unembed_residual(params, r.row(position).transpose());
        curve.rank.push_back(logit_rank(z, token));
        curve.prob.push_back(std::exp(log_softmax(z)[token]));
        curve.logits.push_back(std::move(z));
    }
    return curve;
}

TranslatorSet identity_translators(const ModelConfig& cfg) {
    TranslatorSet ts;
    ts.a.assign(static_cast<std::size_t>(cfg.n_layers),
                Eigen::MatrixXd::Identity(cfg.d_model, cfg.d_model));
    ts.b.assign(static_cast<std::size_t>(cfg.n_layers),
                Eigen::VectorXd::Zero(cfg.d_model));
    return ts;
}

Eigen::VectorXd translator_logits(const Params& params, const TranslatorSet& ts,
                                  int layer, const Eigen::VectorXd& attn_vec) {
    check_contract(layer >= 0 && layer < static_cast<int>(ts.a.size()),
                   "no translator for this layer");
    std::size_t l = static_cast<std::size_t>(layer);
    return unembed_residual(params, ts.a[l] * attn_vec + ts.b[l]);
}

Eigen::VectorXd headlens_logits(const Params& params, const TranslatorSet& ts,
                                int layer, int head,
                                const Eigen::VectorXd& head_out) {
    check_contract(head_out.size() == params.cfg.d_head(),
                   "head output has wrong width");
    Eigen::VectorXd contrib = params.wo_head(layer, head).transpose() * head_out;
    return translator_logits(params, ts, layer, contrib);
}

TranslatorSet train_translators(const Params& params,
                                const std::vector<TokenSequence>& data,
                                const TranslatorConfig& cfg,
                                TranslatorStats* stats) {
    check_data(!data.empty(), "no sequences to fit translators on");
    int d = params.cfg.d_model;
    int n_layers = params.cfg.n_layers;
    int v = params.cfg.vocab_size;

    // Samples: each layer's attention output at every post-image position,
    // paired with the final log distribution there.
    std::vector<std::vector<Eigen::VectorXd>> xs(
        static_cast<std::size_t>(n_layers));
    std::vector<Eigen::VectorXd> logp;
    CaptureFlags flags;
    flags.attn_out = true;
    for (const TokenSequence& seq : data) {
        ActivationTrace tr = forward(params, seq, {}, flags);
        for (int t = seq.last_image_pos; t < seq.length(); ++t) {
            for (int l = 0; l < n_layers; ++l)
                xs[static_cast<std::size_t>(l)].push_back(
                    tr.attn_out[static_cast<std::size_t>(l)].row(t).transpose());
            logp.push_back(log_softmax(tr.logits.row(t).transpose()));
        }
    }
    int n = static_cast<int>(logp.size());
    check_data(n > cfg.holdout_every, "too few translator samples");

    std::vector<int> train_idx, held_idx;
    for (int i = 0; i < n; ++i)
        (cfg.holdout_every > 0 && i % cfg.holdout_every == 0 ? held_idx
                                                             : train_idx)
            .push_back(i);

    TranslatorSet ts = identity_translators(params.cfg);
    if (stats != nullptr) {
        stats->kl_before.assign(static_cast<std::size_t>(n_layers), 0.0);
        stats->kl_after.assign(static_cast<std::size_t>(n_layers), 0.0);
    }

    for (int layer = 0; layer < n_layers; ++layer) {
        std::size_t ls = static_cast<std::size_t>(layer);
        Eigen::MatrixXd& a = ts.a[ls];
        Eigen::VectorXd& b = ts.b[ls];
        const auto& x_layer = xs[ls];

        auto mean_kl = [&](const std::vector<int>& idx) {
            double total = 0;
            for (int i : idx) {
                Eigen::VectorXd lq = log_softmax(translator_logits(
                    params, ts, layer, x_layer[static_cast<std::size_t>(i)]));
                Eigen::ArrayXd q = lq.array().exp();
                total +=
                    (q * (lq.array() - logp[static_cast<std::size_t>(i)].array()))
                        .sum();
            }
            return idx.empty() ? 0.0 : total / static_cast<double>(idx.size());
        };
        if (stats != nullptr) stats->kl_before[ls] = mean_kl(held_idx);

        Eigen::MatrixXd ma = Eigen::MatrixXd::Zero(d, d);
        Eigen::MatrixXd va = Eigen::MatrixXd::Zero(d, d);
        Eigen::VectorXd mb = Eigen::VectorXd::Zero(d);
        Eigen::VectorXd vb = Eigen::VectorXd::Zero(d);
        std::vector<int> order = train_idx;
        int step = 0;
        for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
            Rng rng(derive_seed(cfg.seed,
                                0x7A000000u + static_cast<std::uint32_t>(
                                                  layer * 1000 + epoch)));
            rng.shuffle(order);
            for (int oi : order) {
                const Eigen::VectorXd& x = x_layer[static_cast<std::size_t>(oi)];
                Eigen::VectorXd y = a * x + b;

                double ms = y.squaredNorm() / d;
                double ir = 1.0 / std::sqrt(ms + kNormEps);
                Eigen::VectorXd nf = (y * ir).cwiseProduct(params.final_g);
                Eigen::VectorXd z(v);
                z.noalias() = params.unembed * nf;
                z += params.unembed_b;

                Eigen::VectorXd lq = log_softmax(z);
                Eigen::ArrayXd q = lq.array().exp();
                Eigen::ArrayXd s =
                    lq.array() - logp[static_cast<std::size_t>(oi)].array();
                double kl = (q * s).sum();
                // d KL(q||p) / d z = q .* (s - KL)
                Eigen::VectorXd dz = (q * (s - kl)).matrix();

                Eigen::VectorXd dnf = params.unembed.transpose() * dz;
                Eigen::VectorXd u = dnf.cwiseProduct(params.final_g);
                double c = u.dot(y) * ir * ir * ir / d;
                Eigen::VectorXd dy = ir * u - c * y;
                Eigen::MatrixXd da = dy * x.transpose();

                ++step;
                double bc1 = 1.0 - std::pow(cfg.beta1, step);
                double bc2 = 1.0 - std::pow(cfg.beta2, step);
                ma = cfg.beta1 * ma + (1.0 - cfg.beta1) * da;
                va = cfg.beta2 * va + (1.0 - cfg.beta2) * da.cwiseProduct(da);
                a -= cfg.lr * ((ma / bc1).array() /
                               ((va / bc2).array().sqrt() + cfg.adam_eps))
                                  .matrix();
                mb = cfg.beta1 * mb + (1.0 - cfg.beta1) * dy;
                vb = cfg.beta2 * vb + (1.0 - cfg.beta2) * dy.cwiseProduct(dy);
                b -= cfg.lr * ((mb / bc1).array() /
                               ((vb / bc2).array().sqrt() + cfg.adam_eps))
                                  .matrix();
            }
        }
        ts.steps = step;
        if (stats != nullptr) stats->kl_after[ls] = mean_kl(held_idx);
    }
    return ts;
}

namespace {
constexpr char kTranMagic[8] = {'C', 'L', 'A', 'B', 'T', 'R', 'A', 'N'};
}

void save_translators(const TranslatorSet& ts, const std::string& path) {
    std::filesystem::path fp(path);
    if (fp.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(fp.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary);
    check_data(out.good(), "cannot write translators: " + path);
    out.write(kTranMagic, 8);
    std::uint32_t header[3] = {
        static_cast<std::uint32_t>(ts.a.size()),
        ts.a.empty() ? 0u : static_cast<std::uint32_t>(ts.a[0].rows()),
        static_cast<std::uint32_t>(ts.steps)};
    out.write(reinterpret_cast<const char*>(header), sizeof(header));
    for (std::size_t l = 0; l < ts.a.size(); ++l) {
        out.write(reinterpret_cast<const char*>(ts.a[l].data()),
                  static_cast<std::streamsize>(ts.a[l].size() * 8));
        out.write(reinterpret_cast<const char*>(ts.b[l].data()),
                  static_cast<std::streamsize>(ts.b[l].size() * 8));
    }
    check_data(out.good(), "short write: " + path);
}

TranslatorSet load_translators(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    check_data(in.good(), "cannot open translators: " + path);
    char magic[8];
    in.read(magic, 8);
    check_data(in.good() && std::memcmp(magic, kTranMagic, 8) == 0,
               "not a translator file: " + path);
    std::uint32_t header[3];
    in.read(reinterpret_cast<char*>(header), sizeof(header));
    check_data(in.good(), "truncated translator file: " + path);
    TranslatorSet ts;
    ts.steps = static_cast<int>(header[2]);
    int d = static_cast<int>(header[1]);
    for (std::uint32_t l = 0; l < header[0]; ++l) {
        Eigen::MatrixXd a(d, d);
        Eigen::VectorXd b(d);
        in.read(reinterpret_cast<char*>(a.data()),
                static_cast<std::streamsize>(a.size() * 8));
        in.read(reinterpret_cast<char*>(b.data()),
                static_cast<std::streamsize>(b.size() * 8));
        ts.a.push_back(std::move(a));
        ts.b.push_back(std::move(b));
    }
    check_data(in.good(), "truncated translator file: " + path);
    return ts;
}

}  // namespace countlab
