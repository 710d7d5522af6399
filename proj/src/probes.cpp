#include "countlab/probes.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "countlab/common.hpp"
#include "countlab/forward.hpp"

namespace countlab {

double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    check_contract(scores.size() == labels.size() && !scores.empty(),
                   "scores and labels must align");
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Mid-ranks for ties.
    std::vector<double> rank(scores.size());
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        while (j + 1 < idx.size() && scores[idx[j + 1]] == scores[idx[i]]) ++j;
        double mid = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = mid;
        i = j + 1;
    }

    double pos_ranks = 0;
    std::size_t n_pos = 0;
    for (std::size_t k = 0; k < labels.size(); ++k) {
        if (labels[k] == 1) {
            pos_ranks += rank[k];
            ++n_pos;
        }
    }
    std::size_t n_neg = labels.size() - n_pos;
    check_data(n_pos > 0 && n_neg > 0, "AUC needs both classes");
    return (pos_ranks - 0.5 * static_cast<double>(n_pos) * (n_pos + 1)) /
           (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

std::vector<int> patch_object_labels(const RenderedScene& scene, int min_px) {
    std::vector<int> label(static_cast<std::size_t>(scene.spec.patches()), -1);
    std::vector<char> shared(label.size(), 0);
    for (int i = 0; i < scene.count(); ++i) {
        for (int p : instance_patches(scene.spec,
                                      scene.objects[static_cast<std::size_t>(i)],
                                      min_px)) {
            std::size_t ps = static_cast<std::size_t>(p);
            if (label[ps] >= 0 && label[ps] != i) shared[ps] = 1;
            label[ps] = i;
        }
    }
    for (std::size_t p = 0; p < label.size(); ++p)
        if (shared[p]) label[p] = -1;
    return label;
}

namespace {

struct PatchPair {
    Eigen::VectorXd a, b;
    int label = 0;
};

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

BindingResult binding_probe(const Params& params,
                            const std::vector<BindingScene>& scenes,
                            const BindingConfig& cfg) {
    check_data(!scenes.empty(), "no binding scenes");
    check_config(cfg.rank >= 1 && cfg.rank <= params.cfg.d_model,
                 "probe rank outside 1..d_model");
    int d = params.cfg.d_model;
    int n_levels = params.cfg.n_layers + 1;

    // Labeled patch features per level per scene, then pairs.
    CaptureFlags flags;
    flags.residuals = true;
    std::vector<std::vector<PatchPair>> train_pairs(
        static_cast<std::size_t>(n_levels));
    std::vector<std::vector<PatchPair>> held_pairs(
        static_cast<std::size_t>(n_levels));
    bool any_positive = false;

    for (std::size_t si = 0; si < scenes.size(); ++si) {
        const BindingScene& sc = scenes[si];
        check_data(static_cast<int>(sc.patch_object.size()) ==
                       sc.seq.n_image_tokens(),
                   "patch labels must cover the image grid");
        bool held = cfg.holdout_every > 0 && si % cfg.holdout_every == 0;
        ActivationTrace tr = forward(params, sc.seq, {}, flags);

        std::vector<int> labeled;
        for (int p = 0; p < static_cast<int>(sc.patch_object.size()); ++p)
            if (sc.patch_object[static_cast<std::size_t>(p)] >= 0)
                labeled.push_back(p);

        Rng pair_rng(derive_seed(cfg.seed, 0xB1000000u + static_cast<std::uint32_t>(si)));
        for (int level = 0; level < n_levels; ++level) {
            const Eigen::MatrixXd& r = tr.resid[static_cast<std::size_t>(level)];
            std::vector<PatchPair> pos, neg;
            for (std::size_t ai = 0; ai < labeled.size(); ++ai) {
                for (std::size_t bi = ai + 1; bi < labeled.size(); ++bi) {
                    int pa = labeled[ai], pb = labeled[bi];
                    PatchPair pair;
                    pair.a = r.row(sc.seq.image_pos(pa)).transpose();
                    pair.b = r.row(sc.seq.image_pos(pb)).transpose();
                    pair.label = sc.patch_object[static_cast<std::size_t>(pa)] ==
                                 sc.patch_object[static_cast<std::size_t>(pb)];
                    (pair.label ? pos : neg).push_back(std::move(pair));
                }
            }
            any_positive = any_positive || !pos.empty();
            // Train on balanced-ish pairs; evaluate on everything.
            std::vector<PatchPair>& sink = held ? held_pairs[static_cast<std::size_t>(
                                                      level)]
                                                : train_pairs[static_cast<std::size_t>(
                                                      level)];
            if (held) {
                for (auto& p : pos) sink.push_back(std::move(p));
                for (auto& p : neg) sink.push_back(std::move(p));
            } else {
                std::size_t keep_neg = std::min(neg.size(), 2 * pos.size());
                pair_rng.shuffle(neg);
                for (auto& p : pos) sink.push_back(std::move(p));
                for (std::size_t k = 0; k < keep_neg; ++k)
                    sink.push_back(std::move(neg[k]));
            }
        }
    }
    check_data(any_positive, "no same-object pairs in any scene");

    BindingResult out;
    for (int level = 0; level < n_levels; ++level) {
        std::size_t ls = static_cast<std::size_t>(level);
        std::vector<PatchPair>& train = train_pairs[ls];
        const std::vector<PatchPair>& held = held_pairs[ls];
        check_data(!train.empty() && !held.empty(), "binding pair split is empty");

        Rng rng(derive_seed(cfg.seed, 0xB2000000u + static_cast<std::uint32_t>(level)));
        Eigen::MatrixXd w(cfg.rank, d);
        for (int r = 0; r < cfg.rank; ++r)
            for (int c = 0; c < d; ++c) w(r, c) = 0.05 * rng.normal();

        Eigen::MatrixXd mw = Eigen::MatrixXd::Zero(cfg.rank, d);
        Eigen::MatrixXd vw = Eigen::MatrixXd::Zero(cfg.rank, d);
        int step = 0;
        for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
            rng.shuffle(train);
            for (const PatchPair& pair : train) {
                Eigen::VectorXd u = w * pair.a;
                Eigen::VectorXd v = w * pair.b;
                double s = u.dot(v);
                double g = sigmoid(s) - pair.label;
                Eigen::MatrixXd dw =
                    g * (v * pair.a.transpose() + u * pair.b.transpose());
                ++step;
                double bc1 = 1.0 - std::pow(0.9, step);
                double bc2 = 1.0 - std::pow(0.999, step);
                mw = 0.9 * mw + 0.1 * dw;
                vw = 0.999 * vw + 0.001 * dw.cwiseProduct(dw);
                w -= cfg.lr *
                     ((mw / bc1).array() / ((vw / bc2).array().sqrt() + 1e-8))
                         .matrix();
            }
        }

        std::vector<double> scores;
        std::vector<int> labels;
        for (const PatchPair& pair : held) {
            scores.push_back((w * pair.a).dot(w * pair.b));
            labels.push_back(pair.label);
        }
        out.auc.push_back(roc_auc(scores, labels));

        Rng shuffle_rng(derive_seed(cfg.seed, 0xB3000000u +
                                                  static_cast<std::uint32_t>(level)));
        shuffle_rng.shuffle(labels);
        out.auc_shuffled.push_back(roc_auc(scores, labels));
    }
    out.best_level = static_cast<int>(
        std::max_element(out.auc.begin(), out.auc.end()) - out.auc.begin());
    return out;
}

NumerosityResult numerosity_probe(const Params& params,
                                  const std::vector<NumerosityScene>& scenes,
                                  const NumerosityConfig& cfg) {
    check_data(!scenes.empty(), "no numerosity scenes");
    int d = params.cfg.d_model;
    int n_levels = params.cfg.n_layers + 1;

    std::map<int, int> class_of;  // count -> class index
    for (const NumerosityScene& sc : scenes) class_of.emplace(sc.count, 0);
    int n_classes = 0;
    for (auto& [count, cls] : class_of) cls = n_classes++;
    check_data(n_classes >= 2, "numerosity probe needs at least 2 distinct counts");

    // Features: per level, mean of the object patches' residuals.
    CaptureFlags flags;
    flags.residuals = true;
    std::vector<std::vector<Eigen::VectorXd>> feats(
        static_cast<std::size_t>(n_levels));
    std::vector<int> cls;
    for (const NumerosityScene& sc : scenes) {
        check_data(!sc.object_patches.empty(), "scene without object patches");
        ActivationTrace tr = forward(params, sc.seq, {}, flags);
        for (int level = 0; level < n_levels; ++level) {
            const Eigen::MatrixXd& r = tr.resid[static_cast<std::size_t>(level)];
            Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
            for (int p : sc.object_patches)
                mean += r.row(sc.seq.image_pos(p)).transpose();
            feats[static_cast<std::size_t>(level)].push_back(
                mean / static_cast<double>(sc.object_patches.size()));
        }
        cls.push_back(class_of[sc.count]);
    }

    // 80/20 split, stratified: every 5th scene of each class is held out.
    std::vector<char> held(scenes.size(), 0);
    std::map<int, int> seen;
    for (std::size_t i = 0; i < scenes.size(); ++i)
        held[i] = seen[cls[i]]++ % 5 == 0;
    int n_held = 0;
    for (char h : held) n_held += h;
    check_data(n_held > 0 && n_held < static_cast<int>(scenes.size()),
               "degenerate numerosity split");

    NumerosityResult out;
    for (int level = 0; level < n_levels; ++level) {
        const auto& x_level = feats[static_cast<std::size_t>(level)];
        Rng rng(derive_seed(cfg.seed, 0xC0000000u + static_cast<std::uint32_t>(level)));

        Eigen::MatrixXd w1(d, cfg.hidden), w2(cfg.hidden, n_classes);
        Eigen::VectorXd b1 = Eigen::VectorXd::Zero(cfg.hidden);
        Eigen::VectorXd b2 = Eigen::VectorXd::Zero(n_classes);
        double s1 = 1.0 / std::sqrt(static_cast<double>(d));
        double s2 = 1.0 / std::sqrt(static_cast<double>(cfg.hidden));
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < cfg.hidden; ++j) w1(i, j) = s1 * rng.normal();
        for (int i = 0; i < cfg.hidden; ++i)
            for (int j = 0; j < n_classes; ++j) w2(i, j) = s2 * rng.normal();

        std::vector<int> order;
        for (std::size_t i = 0; i < scenes.size(); ++i)
            if (!held[i]) order.push_back(static_cast<int>(i));

        double lr = cfg.lr;
        for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
            rng.shuffle(order);
            for (int i : order) {
                const Eigen::VectorXd& x = x_level[static_cast<std::size_t>(i)];
                Eigen::VectorXd h1 = (w1.transpose() * x + b1).cwiseMax(0.0);
                Eigen::VectorXd z = w2.transpose() * h1 + b2;
                Eigen::VectorXd p = softmax(z);
                p[cls[static_cast<std::size_t>(i)]] -= 1.0;

                Eigen::VectorXd dh = w2 * p;
                for (int j = 0; j < cfg.hidden; ++j)
                    if (h1[j] <= 0) dh[j] = 0;
                w2 -= lr * (h1 * p.transpose());
                b2 -= lr * p;
                w1 -= lr * (x * dh.transpose());
                b1 -= lr * dh;
            }
        }

        int hits = 0;
        for (std::size_t i = 0; i < scenes.size(); ++i) {
            if (!held[i]) continue;
            const Eigen::VectorXd& x = x_level[i];
            Eigen::VectorXd h1 = (w1.transpose() * x + b1).cwiseMax(0.0);
            Eigen::VectorXd z = w2.transpose() * h1 + b2;
            Eigen::Index best = 0;
            z.maxCoeff(&best);
            hits += static_cast<int>(best) == cls[i];
        }
        out.accuracy.push_back(static_cast<double>(hits) / n_held);
    }
    return out;
}

AttnLensResult attnlens_probes(const Params& params,
                               const std::vector<ScoredScene>& corpus,
                               const Lexicons& lex, const Vocab& vocab,
                               const AttnLensConfig& cfg) {
    check_data(!corpus.empty(), "no probe corpus");
    int nl = params.cfg.n_layers, nh = params.cfg.n_heads;
    int d = params.cfg.d_model, dh = params.cfg.d_head();
    std::vector<char> in_visual = token_mask(lex.visual, vocab);

    // Samples per head: outputs at every post-image position; the decode
    // position's sample index is remembered per scene for the VGS pass.
    std::vector<std::vector<Eigen::VectorXd>> zs(
        static_cast<std::size_t>(nl * nh));
    std::vector<Eigen::VectorXd> logp;
    std::vector<std::size_t> decode_sample;

    CaptureFlags flags;
    flags.head_outputs = true;
    for (const ScoredScene& sc : corpus) {
        ActivationTrace tr = forward(params, sc.seq, {}, flags);
        for (int t = sc.seq.last_image_pos; t < sc.seq.length(); ++t) {
            if (t == sc.seq.last_prompt_pos) decode_sample.push_back(logp.size());
            for (int l = 0; l < nl; ++l)
                for (int h = 0; h < nh; ++h)
                    zs[static_cast<std::size_t>(l * nh + h)].push_back(
                        tr.head_out[static_cast<std::size_t>(l)]
                                   [static_cast<std::size_t>(h)]
                                       .row(t)
                                       .transpose());
            Eigen::VectorXd z = tr.logits.row(t).transpose();
            double m = z.maxCoeff();
            double lse = m + std::log((z.array() - m).exp().sum());
            logp.push_back(z.array() - lse);
        }
    }
    int n = static_cast<int>(logp.size());
    check_data(n > cfg.holdout_every, "too few probe samples");

    std::vector<int> train_idx, held_idx;
    for (int i = 0; i < n; ++i)
        (cfg.holdout_every > 0 && i % cfg.holdout_every == 0 ? held_idx
                                                             : train_idx)
            .push_back(i);

    AttnLensResult out;
    out.kl = Eigen::MatrixXd::Zero(nl, nh);
    out.vgs = Eigen::MatrixXd::Zero(nl, nh);

    for (int l = 0; l < nl; ++l) {
        for (int h = 0; h < nh; ++h) {
            std::size_t hi = static_cast<std::size_t>(l * nh + h);
            const auto& z_head = zs[hi];

            Eigen::MatrixXd w = Eigen::MatrixXd::Zero(d, dh);
            Eigen::VectorXd b = Eigen::VectorXd::Zero(d);
            Eigen::MatrixXd mw = w, vw = w;
            Eigen::VectorXd mb = b, vb = b;

            auto decode = [&](const Eigen::VectorXd& z) {
                return unembed_residual(params, w * z + b);
            };
            auto kl_of = [&](int i) {
                Eigen::VectorXd zl = decode(z_head[static_cast<std::size_t>(i)]);
                double m = zl.maxCoeff();
                double lse = m + std::log((zl.array() - m).exp().sum());
                Eigen::ArrayXd lq = zl.array() - lse;
                Eigen::ArrayXd q = lq.exp();
                return (q * (lq - logp[static_cast<std::size_t>(i)].array())).sum();
            };

            std::vector<int> order = train_idx;
            int step = 0;
            for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
                Rng rng(derive_seed(cfg.seed,
                                    0xA7000000u + static_cast<std::uint32_t>(
                                                      (l * nh + h) * 100 + epoch)));
                rng.shuffle(order);
                for (int oi : order) {
                    const Eigen::VectorXd& z = z_head[static_cast<std::size_t>(oi)];
                    Eigen::VectorXd y = w * z + b;
                    double ms = y.squaredNorm() / d;
                    double ir = 1.0 / std::sqrt(ms + kNormEps);
                    Eigen::VectorXd nf = (y * ir).cwiseProduct(params.final_g);
                    Eigen::VectorXd zv = params.unembed * nf + params.unembed_b;

                    double m = zv.maxCoeff();
                    double lse = m + std::log((zv.array() - m).exp().sum());
                    Eigen::ArrayXd lq = zv.array() - lse;
                    Eigen::ArrayXd q = lq.exp();
                    Eigen::ArrayXd s =
                        lq - logp[static_cast<std::size_t>(oi)].array();
                    double kl = (q * s).sum();
                    Eigen::VectorXd dz = (q * (s - kl)).matrix();

                    Eigen::VectorXd dnf = params.unembed.transpose() * dz;
                    Eigen::VectorXd u = dnf.cwiseProduct(params.final_g);
                    double c = u.dot(y) * ir * ir * ir / d;
                    Eigen::VectorXd dy = ir * u - c * y;
                    Eigen::MatrixXd dw = dy * z.transpose();

                    ++step;
                    double bc1 = 1.0 - std::pow(0.9, step);
                    double bc2 = 1.0 - std::pow(0.999, step);
                    mw = 0.9 * mw + 0.1 * dw;
                    vw = 0.999 * vw + 0.001 * dw.cwiseProduct(dw);
                    w -= cfg.lr *
                         ((mw / bc1).array() / ((vw / bc2).array().sqrt() + 1e-8))
                             .matrix();
                    mb = 0.9 * mb + 0.1 * dy;
                    vb = 0.999 * vb + 0.001 * dy.cwiseProduct(dy);
                    b -= cfg.lr *
                         ((mb / bc1).array() / ((vb / bc2).array().sqrt() + 1e-8))
                             .matrix();
                }
            }

            double kl_sum = 0;
            for (int i : held_idx) kl_sum += kl_of(i);
            out.kl(l, h) = kl_sum / static_cast<double>(held_idx.size());

            double vgs_sum = 0;
            for (std::size_t ds : decode_sample) {
                Eigen::VectorXd p = softmax(decode(z_head[ds]));
                int n_vis = 0;
                for (int tok : top_k_indices(p, 10))
                    n_vis += in_visual[static_cast<std::size_t>(tok)];
                vgs_sum += n_vis / 10.0;
            }
            out.vgs(l, h) = vgs_sum / static_cast<double>(decode_sample.size());
        }
    }

    double mean_vgs = out.vgs.mean();
    out.vgs_best_mean_ratio = mean_vgs > 0 ? out.vgs.maxCoeff() / mean_vgs : 0.0;
    return out;
}

}  // namespace countlab
