#include "countlab/heads.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>

#include "countlab/common.hpp"
#include "countlab/forward.hpp"
#include "countlab/io_util.hpp"

namespace countlab {

std::vector<HeadReport> score_heads(const Params& params, const TranslatorSet& ts,
                                    const std::vector<ScoredScene>& corpus,
                                    const Lexicons& lex, const Vocab& vocab) {
    check_data(!corpus.empty(), "empty scoring corpus");
    int nl = params.cfg.n_layers, nh = params.cfg.n_heads;
    int v = params.cfg.vocab_size;
    check_contract(vocab.size() == v, "vocabulary does not match the model");
    std::vector<char> in_count = token_mask(lex.counting, vocab);
    std::vector<char> in_visual = token_mask(lex.visual, vocab);

    std::vector<HeadReport> reports(static_cast<std::size_t>(nl * nh));
    std::vector<Eigen::VectorXd> mean_probs(
        static_cast<std::size_t>(nl * nh), Eigen::VectorXd::Zero(v));

    CaptureFlags flags;
    flags.attention = true;
    flags.head_outputs = true;
    for (const ScoredScene& sc : corpus) {
        ActivationTrace tr = forward(params, sc.seq, {}, flags);
        int pos = sc.seq.last_prompt_pos;
        Eigen::Index model_ans = 0;
        tr.logits.row(pos).maxCoeff(&model_ans);
        int first = sc.seq.first_image_pos;
        int n_img = sc.seq.n_image_tokens();

        for (int l = 0; l < nl; ++l) {
            for (int h = 0; h < nh; ++h) {
                std::size_t ri = static_cast<std::size_t>(l * nh + h);
                HeadReport& r = reports[ri];
                Eigen::VectorXd z = headlens_logits(
                    params, ts, l, h,
                    tr.head_out[static_cast<std::size_t>(l)][static_cast<std::size_t>(h)]
                        .row(pos)
                        .transpose());
                Eigen::VectorXd p = softmax(z);
                mean_probs[ri] += p;

                std::vector<int> top10 = top_k_indices(p, 10);
                int n_count = 0, n_visual = 0;
                bool gt_seen = false;
                for (int tok : top10) {
                    n_count += in_count[static_cast<std::size_t>(tok)];
                    n_visual += in_visual[static_cast<std::size_t>(tok)];
                    gt_seen = gt_seen || tok == sc.gt_token;
                }
                r.cter += n_count / 10.0;
                r.vgs += n_visual / 10.0;
                r.gt_at_10 += gt_seen ? 1.0 : 0.0;
                r.top1_acc += top10[0] == sc.gt_token ? 1.0 : 0.0;
                r.top1_model += top10[0] == static_cast<int>(model_ans) ? 1.0 : 0.0;
                r.yesno_mass += p[vocab.yes()] + p[vocab.no()];

                const Eigen::MatrixXd& a =
                    tr.attn[static_cast<std::size_t>(l)][static_cast<std::size_t>(h)];
                double img_mass = a.row(pos).segment(first, n_img).sum();
                double obj_mass = 0;
                for (int patch : sc.object_patches)
                    obj_mass += a(pos, first + patch);
                r.img_attn_ratio += img_mass;
                r.obj_in_img_ratio += img_mass > 0 ? obj_mass / img_mass : 0.0;
            }
        }
    }

    double inv_n = 1.0 / static_cast<double>(corpus.size());
    for (int l = 0; l < nl; ++l) {
        for (int h = 0; h < nh; ++h) {
            std::size_t ri = static_cast<std::size_t>(l * nh + h);
            HeadReport& r = reports[ri];
            r.layer = l;
            r.head = h;
            r.cter *= inv_n;
            r.vgs *= inv_n;
            r.gt_at_10 *= inv_n;
            r.top1_acc *= inv_n;
            r.top1_model *= inv_n;
            r.yesno_mass *= inv_n;
            r.img_attn_ratio *= inv_n;
            r.obj_in_img_ratio *= inv_n;
            Eigen::VectorXd mp = mean_probs[ri] * inv_n;
            for (int tok : top_k_indices(mp, 10)) {
                r.top10_tokens.push_back(tok);
                r.top10_probs.push_back(mp[tok]);
            }
        }
    }
    return reports;
}

std::vector<std::string> vap_group_names() {
    return {"system",      "image",       "last_image", "instruction",
            "last_prompt", "generated",   "all"};
}

namespace {

std::vector<int> group_positions(const TokenSequence& seq, const std::string& group) {
    if (group == "all") {
        std::vector<int> all(static_cast<std::size_t>(seq.length()));
        std::iota(all.begin(), all.end(), 0);
        return all;
    }
    for (SegmentTag tag :
         {SegmentTag::SystemPrompt, SegmentTag::ImageToken, SegmentTag::LastImageToken,
          SegmentTag::UserInstruction, SegmentTag::LastPromptToken,
          SegmentTag::GeneratedToken})
        if (to_string(tag) == group) return positions_with_tag(seq, tag);
    throw ConfigError("unknown token group: " + group);
}

void check_pair(const VapPair& pair) {
    check_data(pair.clean.length() == pair.corr.length(),
               "pair sequences differ in length");
    check_data(pair.clean.tags == pair.corr.tags, "pair tags misaligned");
}

int predict(const Params& params, const TokenSequence& seq,
            const OverrideSet& ov = {}) {
    return generate_answer(params, seq, ov);
}

}  // namespace

OverwriteCurve vap_layerwise(const Params& params, const std::vector<VapPair>& pairs,
                             const std::vector<std::string>& groups) {
    check_data(!pairs.empty(), "no pairs to patch");
    int nl = params.cfg.n_layers;
    OverwriteCurve curve;
    curve.groups = groups;
    curve.rate = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(groups.size()), nl);
    curve.n_pairs = static_cast<int>(pairs.size());

    CaptureFlags resid_only;
    resid_only.residuals = true;
    for (const VapPair& pair : pairs) {
        check_pair(pair);
        ActivationTrace corr_tr = forward(params, pair.corr, {}, resid_only);
        int clean_pred = predict(params, pair.clean);
        Eigen::Index corr_pred = 0;
        corr_tr.logits.row(pair.corr.last_prompt_pos).maxCoeff(&corr_pred);

        for (std::size_t g = 0; g < groups.size(); ++g) {
            std::vector<int> positions = group_positions(pair.clean, groups[g]);
            for (int level = 1; level <= nl; ++level) {
                OverrideSet ov;
                for (int t : positions)
                    ov.resid[level][t] =
                        corr_tr.resid[static_cast<std::size_t>(level)]
                            .row(t)
                            .transpose();
                int patched = predict(params, pair.clean, ov);
                if (patched == static_cast<int>(corr_pred) && patched != clean_pred)
                    curve.rate(static_cast<Eigen::Index>(g), level - 1) += 1.0;
            }
        }
    }
    curve.rate /= static_cast<double>(pairs.size());
    return curve;
}

Eigen::MatrixXd vap_headwise(const Params& params, const std::vector<VapPair>& pairs) {
    check_data(!pairs.empty(), "no pairs to patch");
    int nl = params.cfg.n_layers, nh = params.cfg.n_heads;
    Eigen::MatrixXd gamma = Eigen::MatrixXd::Zero(nl, nh);

    CaptureFlags heads_only;
    heads_only.head_outputs = true;
    for (const VapPair& pair : pairs) {
        check_pair(pair);
        check_data(pair.clean_answer >= 0 && pair.corr_answer >= 0,
                   "pair lacks answer tokens");
        ActivationTrace corr_tr = forward(params, pair.corr, {}, heads_only);
        ActivationTrace clean_tr = forward(params, pair.clean);
        int pos = pair.clean.last_prompt_pos;
        double m0 = clean_tr.logits(pos, pair.clean_answer) -
                    clean_tr.logits(pos, pair.corr_answer);

        for (int l = 0; l < nl; ++l) {
            for (int h = 0; h < nh; ++h) {
                OverrideSet ov;
                ov.head_out[{l, h}] =
                    corr_tr.head_out[static_cast<std::size_t>(l)]
                                    [static_cast<std::size_t>(h)];
                ActivationTrace tr = forward(params, pair.clean, ov);
                double m1 = tr.logits(pos, pair.clean_answer) -
                            tr.logits(pos, pair.corr_answer);
                gamma(l, h) += m0 - m1;
            }
        }
    }
    return gamma / static_cast<double>(pairs.size());
}

namespace {

constexpr char kMeanMagic[9] = "CLABMEAN";

bool load_ablation_cache(const std::string& path, int nl, int nh, int seq_len,
                         int dh, std::size_t corpus_n,
                         std::vector<Eigen::MatrixXd>& means,
                         Eigen::MatrixXd& degradation) {
    std::ifstream f(path, std::ios::binary);
    if (!f) return false;
    char magic[8];
    std::int32_t dims[5];
    f.read(magic, 8);
    f.read(reinterpret_cast<char*>(dims), sizeof dims);
    if (!f || std::memcmp(magic, kMeanMagic, 8) != 0 || dims[0] != nl ||
        dims[1] != nh || dims[2] != seq_len || dims[3] != dh ||
        dims[4] != static_cast<std::int32_t>(corpus_n))
        return false;
    for (Eigen::MatrixXd& m : means) {
        m.resize(seq_len, dh);
        f.read(reinterpret_cast<char*>(m.data()),
               static_cast<std::streamsize>(sizeof(double) * m.size()));
    }
    degradation.resize(nl, nh);
    f.read(reinterpret_cast<char*>(degradation.data()),
           static_cast<std::streamsize>(sizeof(double) * degradation.size()));
    return static_cast<bool>(f);
}

void save_ablation_cache(const std::string& path, int nl, int nh, int seq_len,
                         int dh, std::size_t corpus_n,
                         const std::vector<Eigen::MatrixXd>& means,
                         const Eigen::MatrixXd& degradation) {
    std::ofstream f(path, std::ios::binary);
    check_data(static_cast<bool>(f), "cannot write ablation cache: " + path);
    std::int32_t dims[5] = {nl, nh, seq_len, dh,
                            static_cast<std::int32_t>(corpus_n)};
    f.write(kMeanMagic, 8);
    f.write(reinterpret_cast<const char*>(dims), sizeof dims);
    for (const Eigen::MatrixXd& m : means)
        f.write(reinterpret_cast<const char*>(m.data()),
                static_cast<std::streamsize>(sizeof(double) * m.size()));
    f.write(reinterpret_cast<const char*>(degradation.data()),
            static_cast<std::streamsize>(sizeof(double) * degradation.size()));
}

}  // namespace

HeadSet mean_ablation_importance(const Params& params,
                                 const std::vector<ScoredScene>& corpus,
                                 const std::string& task, int top_k,
                                 const std::string& cache_dir,
                                 const std::string& cache_key,
                                 Eigen::MatrixXd* degradation_out) {
    check_data(!corpus.empty(), "empty ablation corpus");
    int nl = params.cfg.n_layers, nh = params.cfg.n_heads, dh = params.cfg.d_head();
    int seq_len = corpus.front().seq.length();
    for (const ScoredScene& sc : corpus)
        check_data(sc.seq.length() == seq_len,
                   "ablation corpus sequences must share one length");

    std::string cache_path;
    if (!cache_dir.empty() && !cache_key.empty()) {
        ensure_dir(cache_dir);
        cache_path = cache_dir + "/meanabl_" + cache_key + ".bin";
    }

    std::vector<Eigen::MatrixXd> means(static_cast<std::size_t>(nl * nh));
    Eigen::MatrixXd degradation;
    bool cached = !cache_path.empty() &&
                  load_ablation_cache(cache_path, nl, nh, seq_len, dh,
                                      corpus.size(), means, degradation);
    if (!cached) {
        for (Eigen::MatrixXd& m : means) m = Eigen::MatrixXd::Zero(seq_len, dh);
        std::vector<double> baseline(corpus.size(), 0.0);
        CaptureFlags heads_only;
        heads_only.head_outputs = true;
        for (std::size_t i = 0; i < corpus.size(); ++i) {
            const ScoredScene& sc = corpus[i];
            ActivationTrace tr = forward(params, sc.seq, {}, heads_only);
            baseline[i] = tr.logits(sc.seq.last_prompt_pos, sc.gt_token);
            for (int l = 0; l < nl; ++l)
                for (int h = 0; h < nh; ++h)
                    means[static_cast<std::size_t>(l * nh + h)] +=
                        tr.head_out[static_cast<std::size_t>(l)]
                                   [static_cast<std::size_t>(h)];
        }
        for (Eigen::MatrixXd& m : means) m /= static_cast<double>(corpus.size());

        degradation = Eigen::MatrixXd::Zero(nl, nh);
        for (int l = 0; l < nl; ++l) {
            for (int h = 0; h < nh; ++h) {
                OverrideSet ov;
                ov.head_out[{l, h}] = means[static_cast<std::size_t>(l * nh + h)];
                double drop = 0;
                for (std::size_t i = 0; i < corpus.size(); ++i) {
                    const ScoredScene& sc = corpus[i];
                    ActivationTrace tr = forward(params, sc.seq, ov);
                    drop += baseline[i] -
                            tr.logits(sc.seq.last_prompt_pos, sc.gt_token);
                }
                degradation(l, h) = drop / static_cast<double>(corpus.size());
            }
        }
        if (!cache_path.empty())
            save_ablation_cache(cache_path, nl, nh, seq_len, dh, corpus.size(),
                                means, degradation);
    }

    std::vector<std::pair<int, int>> order;
    for (int l = 0; l < nl; ++l)
        for (int h = 0; h < nh; ++h) order.emplace_back(l, h);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) {
        double da = degradation(a.first, a.second);
        double db = degradation(b.first, b.second);
        if (da != db) return da > db;
        return a < b;
    });
    if (static_cast<int>(order.size()) > top_k)
        order.resize(static_cast<std::size_t>(top_k));

    if (degradation_out != nullptr) *degradation_out = degradation;
    HeadSet hs;
    hs.heads = std::move(order);
    hs.task = task;
    return hs;
}

double jaccard(const HeadSet& a, const HeadSet& b) {
    std::set<std::pair<int, int>> sa(a.heads.begin(), a.heads.end());
    std::set<std::pair<int, int>> sb(b.heads.begin(), b.heads.end());
    check_contract(sa.size() == a.heads.size() && sb.size() == b.heads.size(),
                   "head sets must not contain duplicates");
    if (sa.empty() && sb.empty()) return 1.0;
    std::size_t inter = 0;
    for (const auto& head : sa) inter += sb.count(head);
    return static_cast<double>(inter) /
           static_cast<double>(sa.size() + sb.size() - inter);
}

void categorize_heads(std::vector<HeadReport>& reports, int n_layers,
                      const CategorizeThresholds& th) {
    // VGS rank over all heads, 1 = highest score.
    std::vector<std::size_t> idx(reports.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (reports[a].vgs != reports[b].vgs) return reports[a].vgs > reports[b].vgs;
        if (reports[a].layer != reports[b].layer)
            return reports[a].layer < reports[b].layer;
        return reports[a].head < reports[b].head;
    });
    std::vector<int> vgs_rank(reports.size());
    for (std::size_t r = 0; r < idx.size(); ++r)
        vgs_rank[idx[r]] = static_cast<int>(r) + 1;

    int early_cutoff =
        static_cast<int>(std::ceil(th.early_frac * n_layers));  // 1-based layers
    for (std::size_t i = 0; i < reports.size(); ++i) {
        HeadReport& r = reports[i];
        if (r.importance > th.importance && r.top1_acc > th.top1)
            r.category = "CountingAggregation";
        else if (r.importance > th.importance && r.img_attn_ratio > th.img_attn &&
                 r.top1_acc <= th.top1)
            r.category = "CrossModalRouting";
        else if (r.yesno_mass > th.yesno)
            r.category = "Awareness";
        else if (r.layer + 1 <= early_cutoff && vgs_rank[i] <= th.vgs_top)
            r.category = "VisualGrounding";
        else
            r.category = "Unclassified";
    }
}

}  // namespace countlab
