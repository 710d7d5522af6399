#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <set>

#include "countlab/focus.hpp"
#include "countlab/forward.hpp"
#include "countlab/lens.hpp"
#include "countlab/metrics.hpp"
#include "countlab/probes.hpp"
#include "countlab/reports.hpp"
#include "countlab/yesband.hpp"
#include "tool_common.hpp"

namespace countlab {

namespace {

struct InterpOpts {
    CommonOpts common;
    std::string ckpt;
    std::string data;
    std::string pairs;
    int scenes = 200;
    std::string task = "count";
    std::uint64_t seed = 0;

    // translators
    std::string translators;       // load from here when the file exists
    std::string save_translators;  // write after training
    int tr_epochs = 3;
    double tr_lr = 5e-3;

    // vap
    std::vector<std::string> groups;

    // ablate / jaccard
    int top_k = 20;
    std::string cache_dir;
    bool no_cache = false;
    std::vector<std::string> sets;     // name=headset.json
    std::vector<std::string> corpora;  // name=dataset-dir

    // headlens categorization
    std::string gammas;
    CategorizeThresholds th;

    // probes
    std::string which = "all";
    int rank = 16;
    int probe_epochs = 0;  // 0 keeps each probe's own default

    // yesband
    int k_lo = 0;
    int k_hi = -1;  // -1 means the vocabulary maximum
};

TranslatorSet get_translators(const Params& params,
                              const std::vector<ScoredScene>& corpus,
                              const InterpOpts& o, json* stats_json) {
    if (!o.translators.empty() && std::filesystem::exists(o.translators)) {
        TranslatorSet ts = load_translators(o.translators);
        check_contract(static_cast<int>(ts.a.size()) == params.cfg.n_layers &&
                           ts.a[0].rows() == params.cfg.d_model,
                       "translator shapes do not match the checkpoint");
        return ts;
    }
    std::vector<TokenSequence> data;
    for (const ScoredScene& s : corpus) data.push_back(s.seq);
    TranslatorConfig tc;
    tc.epochs = o.tr_epochs;
    tc.lr = o.tr_lr;
    tc.seed = o.seed;
    TranslatorStats stats;
    TranslatorSet ts = train_translators(params, data, tc, &stats);
    if (stats_json != nullptr)
        *stats_json = json{{"kl_before", stats.kl_before},
                           {"kl_after", stats.kl_after},
                           {"steps", ts.steps}};
    std::string path = o.save_translators.empty() ? o.translators : o.save_translators;
    if (!path.empty()) save_translators(ts, path);
    return ts;
}

// name=value pairs from repeatable flags.
std::vector<std::pair<std::string, std::string>> parse_named(
    const std::vector<std::string>& raw, const std::string& flag) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const std::string& s : raw) {
        auto eq = s.find('=');
        check_config(eq != std::string::npos && eq > 0 && eq + 1 < s.size(),
                     flag + " wants name=value, got: " + s);
        out.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    return out;
}

json head_reports_json(const std::vector<HeadReport>& reports, const Vocab& vocab) {
    json arr = json::array();
    for (const HeadReport& r : reports) {
        json top10 = json::array();
        for (std::size_t i = 0; i < r.top10_tokens.size(); ++i)
            top10.push_back({{"token", vocab.token(r.top10_tokens[i])},
                             {"prob", r.top10_probs[i]}});
        arr.push_back({{"layer", r.layer},
                       {"head", r.head},
                       {"importance", r.importance},
                       {"img_attn", r.img_attn_ratio},
                       {"obj_in_img", r.obj_in_img_ratio},
                       {"cter", r.cter},
                       {"vgs", r.vgs},
                       {"gt_at_10", r.gt_at_10},
                       {"top1_acc", r.top1_acc},
                       {"top1_model", r.top1_model},
                       {"yesno_mass", r.yesno_mass},
                       {"category", r.category},
                       {"top10", top10}});
    }
    return arr;
}

Eigen::MatrixXd report_matrix(const std::vector<HeadReport>& reports,
                              const ModelConfig& cfg,
                              double HeadReport::* field) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(cfg.n_layers, cfg.n_heads);
    for (const HeadReport& r : reports) m(r.layer, r.head) = r.*field;
    return m;
}

std::string ablate_cache_key(const std::string& ckpt, const std::string& data_dir,
                             const std::string& task, int n_scenes) {
    std::string manifest = data_dir + "/manifest.jsonl";
    std::string blob = sha256_file_hex(ckpt) + ":" + sha256_file_hex(manifest) +
                       ":" + task + ":" + std::to_string(n_scenes);
    return sha256_hex(blob.data(), blob.size()).substr(0, 16);
}

void run_lens(const CLI::App& cmd, InterpOpts& o) {
    Overlay cfg(&cmd, o.common.config);
    cfg.get("--ckpt", o.ckpt);
    cfg.get("--data", o.data);
    cfg.get("--scenes", o.scenes);
    check_config(!o.ckpt.empty() && !o.data.empty(), "lens needs --ckpt and --data");
    std::string out_root = resolve_out(o.common);

    auto [params, vocab] = load_model(o.ckpt);
    Dataset ds = read_dataset(o.data);
    auto corpus = scored_corpus(ds, vocab, task_from_string(o.task), o.scenes);

    json tr_stats;
    get_translators(params, corpus, o, &tr_stats);  // trains/saves when asked

    CaptureFlags flags;
    flags.residuals = true;
    int n_levels = params.cfg.n_layers + 1;
    std::vector<double> rank_sum(static_cast<std::size_t>(n_levels), 0.0);
    std::vector<double> rank1(static_cast<std::size_t>(n_levels), 0.0);
    int monotone = 0, correct = 0, correct_final_rank1 = 0;
    json per_scene = json::array();

    for (const ScoredScene& s : corpus) {
        ActivationTrace tr = forward(params, s.seq, {}, flags);
        LensCurve curve = logit_lens(params, tr, s.seq.last_prompt_pos, s.gt_token);
        bool mono = true;
        for (int l = 0; l + 1 < n_levels; ++l)
            mono = mono && curve.rank[static_cast<std::size_t>(l + 1)] <=
                               curve.rank[static_cast<std::size_t>(l)];
        monotone += mono;
        Eigen::Index ans = 0;
        tr.logits.row(s.seq.last_prompt_pos).maxCoeff(&ans);
        bool is_correct = static_cast<int>(ans) == s.gt_token;
        correct += is_correct;
        correct_final_rank1 += is_correct && curve.rank.back() == 1;
        for (int l = 0; l < n_levels; ++l) {
            rank_sum[static_cast<std::size_t>(l)] += curve.rank[static_cast<std::size_t>(l)];
            rank1[static_cast<std::size_t>(l)] += curve.rank[static_cast<std::size_t>(l)] == 1;
        }
        per_scene.push_back({{"gt_token", vocab.token(s.gt_token)},
                             {"ranks", curve.rank},
                             {"monotone", mono},
                             {"correct", is_correct}});
    }
    double n = static_cast<double>(corpus.size());

    json echo{{"ckpt", o.ckpt}, {"data", o.data}, {"scenes", corpus.size()}};
    json rep = report_envelope("lens", echo);
    rep["translators"] = tr_stats;
    rep["frac_monotone"] = monotone / n;
    rep["n_correct"] = correct;
    rep["correct_final_rank1"] = correct_final_rank1;
    rep["scenes"] = per_scene;

    std::vector<CurveRow> rows;
    for (int l = 0; l < n_levels; ++l) {
        rows.push_back({l, "mean_rank", rank_sum[static_cast<std::size_t>(l)] / n});
        rows.push_back({l, "rank1_rate", rank1[static_cast<std::size_t>(l)] / n});
    }
    write_curve_csv(out_root + "/lens_curve.csv", rows);
    write_json_file(out_root + "/lens_report.json", rep);
    std::printf("monotone %.3f, correct %d/%d, final rank-1 on correct %d\n",
                monotone / n, correct, static_cast<int>(corpus.size()),
                correct_final_rank1);
}

void run_headlens(const CLI::App& cmd, InterpOpts& o) {
    Overlay cfg(&cmd, o.common.config);
    cfg.get("--ckpt", o.ckpt);
    cfg.get("--data", o.data);
    cfg.get("--scenes", o.scenes);
    cfg.get("--gammas", o.gammas);
    check_config(!o.ckpt.empty() && !o.data.empty(),
                 "headlens needs --ckpt and --data");
    std::string out_root = resolve_out(o.common);

    auto [params, vocab] = load_model(o.ckpt);
    Dataset ds = read_dataset(o.data);
    auto corpus = scored_corpus(ds, vocab, task_from_string(o.task), o.scenes);
    Lexicons lex = Lexicons::standard(vocab);

    json tr_stats;
    TranslatorSet ts = get_translators(params, corpus, o, &tr_stats);
    std::vector<HeadReport> reports = score_heads(params, ts, corpus, lex, vocab);

    if (!o.gammas.empty()) {
        auto gm = read_head_values(o.gammas);
        for (HeadReport& r : reports) {
            auto it = gm.find({r.layer, r.head});
            if (it != gm.end()) r.importance = it->second;
        }
    }
    categorize_heads(reports, params.cfg.n_layers, o.th);

    std::map<std::string, int> by_category;
    for (const HeadReport& r : reports) by_category[r.category] += 1;

    json echo{{"ckpt", o.ckpt},
              {"data", o.data},
              {"scenes", corpus.size()},
              {"gammas", o.gammas},
              {"thresholds",
               {{"importance", o.th.importance},
                {"top1", o.th.top1},
                {"img_attn", o.th.img_attn},
                {"yesno", o.th.yesno},
                {"early_frac", o.th.early_frac},
                {"vgs_top", o.th.vgs_top}}}};
    json rep = report_envelope("headlens", echo);
    rep["translators"] = tr_stats;
    rep["heads"] = head_reports_json(reports, vocab);
    rep["by_category"] = by_category;
    rep["importance"] = matrix_json(report_matrix(reports, params.cfg,
                                                  &HeadReport::importance));
    rep["cter"] = matrix_json(report_matrix(reports, params.cfg, &HeadReport::cter));
    rep["vgs"] = matrix_json(report_matrix(reports, params.cfg, &HeadReport::vgs));
    rep["img_attn"] = matrix_json(
        report_matrix(reports, params.cfg, &HeadReport::img_attn_ratio));
    write_json_file(out_root + "/headlens_report.json", rep);
    for (const auto& [cat, count] : by_category)
        std::printf("%s: %d\n", cat.c_str(), count);
}

void run_vap_layer(const CLI::App& cmd, InterpOpts& o) {
    Overlay cfg(&cmd, o.common.config);
    cfg.get("--ckpt", o.ckpt);
    cfg.get("--pairs", o.pairs);
    cfg.get("--group", o.groups);
    check_config(!o.ckpt.empty() && !o.pairs.empty(),
                 "vap-layer needs --ckpt and --pairs");
    std::string out_root = resolve_out(o.common);

    auto [params, vocab] = load_model(o.ckpt);
    auto pairs = vap_corpus(read_pairs(o.pairs), vocab);

    std::vector<std::string> groups;
    for (const std::string& g : o.groups) groups.push_back(canonical_group(g));
    if (groups.empty()) groups = vap_group_names();

    OverwriteCurve curve = vap_layerwise(params, pairs, groups);

    int crossover = -1;
    auto img = std::find(groups.begin(), groups.end(), "image");
    auto lp = std::find(groups.begin(), groups.end(), "last_prompt");
    if (img != groups.end() && lp != groups.end()) {
        Eigen::Index ri = img - groups.begin(), rl = lp - groups.begin();
        for (int l = 0; l < params.cfg.n_layers; ++l)
            if (curve.rate(rl, l) > curve.rate(ri, l)) {
                crossover = l + 1;
                break;
            }
    }

    json echo{{"ckpt", o.ckpt}, {"pairs", o.pairs}, {"groups", groups}};
    json rep = report_envelope("vap_layer", echo);
    rep["n_pairs"] = curve.n_pairs;
    rep["rate"] = matrix_json(curve.rate);
    rep["crossover_layer"] = crossover;  // 1-based; -1 when absent
    write_json_file(out_root + "/vap_layer_report.json", rep);

    std::vector<CurveRow> rows;
    for (std::size_t g = 0; g < groups.size(); ++g)
        for (int l = 0; l < params.cfg.n_layers; ++l)
            rows.push_back({l + 1, groups[g],
                            curve.rate(static_cast<Eigen::Index>(g), l)});
    write_curve_csv(out_root + "/vap_layer_curve.csv", rows);
    std::printf("crossover layer: %d\n", crossover);
}

void run_vap_head(const CLI::App& cmd, InterpOpts& o) {
    Overlay cfg(&cmd, o.common.config);
    cfg.get("--ckpt", o.ckpt);
    cfg.get("--pairs", o.pairs);
    check_config(!o.ckpt.empty() && !o.pairs.empty(),
                 "vap-head needs --ckpt and --pairs");
    std::string out_root = resolve_out(o.common);

    auto [params, vocab] = load_model(o.ckpt);
    auto pairs = vap_corpus(read_pairs(o.pairs), vocab);
    Eigen::MatrixXd gamma = vap_headwise(params, pairs);

    std::map<std::pair<int, int>, double> values;
    for (int l = 0; l < gamma.rows(); ++l)
        for (int h = 0; h < gamma.cols(); ++h) values[{l, h}] = gamma(l, h);
    write_head_values(out_root + "/gammas.json", values);

    json echo{{"ckpt", o.ckpt}, {"pairs", o.pairs}};
    json rep = report_envelope("vap_head", echo);
    rep["n_pairs"] = pairs.size();
    rep["gamma"] = matrix_json(gamma);
    rep["important_threshold"] = 0.05;
    int important = (gamma.array() > 0.05).count();
    rep["n_important"] = important;
    write_json_file(out_root + "/vap_head_report.json", rep);
    std::printf("%d/%d heads above 0.05\n", important,
                static_cast<int>(gamma.size()));
}

void run_ablate(const CLI::App& cmd, InterpOpts& o) {
    Overlay cfg(&cmd, o.common.config);
    cfg.get("--ckpt", o.ckpt);
    cfg.get("--data", o.data);
    cfg.get("--scenes", o.scenes);
    cfg.get("--task", o.task);
    cfg.get("--top-k", o.top_k);
    check_config(!o.ckpt.empty() && !o.data.empty(), "ablate needs --ckpt and --data");
    std::string out_root = resolve_out(o.common);

    auto [params, vocab] = load_model(o.ckpt);
    Dataset ds = read_dataset(o.data);
    auto corpus = scored_corpus(ds, vocab, task_from_string(o.task), o.scenes);

    std::string cache_dir = o.no_cache ? "" : o.cache_dir;
    if (!o.no_cache && cache_dir.empty()) cache_dir = out_root + "/cache";
    std::string key = cache_dir.empty()
                          ? ""
                          : ablate_cache_key(o.ckpt, o.data, o.task,
                                             static_cast<int>(corpus.size()));

    Eigen::MatrixXd degradation;
    HeadSet set = mean_ablation_importance(params, corpus, o.task, o.top_k,
                                           cache_dir, key, &degradation);
    write_head_set(out_root + "/headset_" + o.task + ".json", set.task, set.heads);

    json echo{{"ckpt", o.ckpt},   {"data", o.data}, {"scenes", corpus.size()},
              {"task", o.task},   {"top_k", o.top_k},
              {"cache_dir", cache_dir}};
    json rep = report_envelope("ablate", echo);
    rep["degradation"] = matrix_json(degradation);
    json ranked = json::array();
    for (const auto& [l, h] : set.heads)
        ranked.push_back({{"layer", l}, {"head", h}, {"degradation", degradation(l, h)}});
    rep["top_heads"] = ranked;
    write_json_file(out_root + "/ablate_report.json", rep);
    std::printf("top head: layer %d head %d\n", set.heads[0].first,
                set.heads[0].second);
}

void run_jaccard(const CLI::App& cmd, InterpOpts& o) {
    Overlay cfg(&cmd, o.common.config);
    cfg.get("--ckpt", o.ckpt);
    cfg.get("--set", o.sets);
    cfg.get("--corpus", o.corpora);
    cfg.get("--top-k", o.top_k);
    std::string out_root = resolve_out(o.common);

    std::vector<std::string> names;
    std::vector<HeadSet> sets;
    for (const auto& [name, path] : parse_named(o.sets, "--set")) {
        auto [task, heads] = read_head_set(path);
        HeadSet hs;
        hs.task = task.empty() ? name : task;
        hs.heads = heads;
        names.push_back(name);
        sets.push_back(std::move(hs));
    }
    if (!o.corpora.empty()) {
        check_config(!o.ckpt.empty(), "--corpus needs --ckpt");
        auto [params, vocab] = load_model(o.ckpt);
        for (const auto& [name, dir] : parse_named(o.corpora, "--corpus")) {
            Dataset ds = read_dataset(dir);
            Task task = task_from_string(name);
            auto corpus = scored_corpus(ds, vocab, task, o.scenes);
            sets.push_back(
                mean_ablation_importance(params, corpus, name, o.top_k));
            names.push_back(name);
            write_head_set(out_root + "/headset_" + name + ".json", name,
                           sets.back().heads);
        }
    }
    check_config(sets.size() >= 2, "jaccard needs at least two head sets");

    Eigen::MatrixXd m(sets.size(), sets.size());
    for (std::size_t i = 0; i < sets.size(); ++i)
        for (std::size_t j = 0; j < sets.size(); ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                jaccard(sets[i], sets[j]);

    json echo{{"ckpt", o.ckpt}, {"names", names}, {"top_k", o.top_k}};
    json rep = report_envelope("jaccard", echo);
    rep["similarity"] = matrix_json(m);
    write_json_file(out_root + "/jaccard_report.json", rep);

    std::vector<CurveRow> rows;
    for (std::size_t i = 0; i < sets.size(); ++i)
        for (std::size_t j = 0; j < sets.size(); ++j)
            rows.push_back({static_cast<int>(i), names[i] + "|" + names[j],
                            m(static_cast<Eigen::Index>(i),
                              static_cast<Eigen::Index>(j))});
    write_curve_csv(out_root + "/jaccard_matrix.csv", rows);
    for (std::size_t i = 0; i < sets.size(); ++i)
        for (std::size_t j = i + 1; j < sets.size(); ++j)
            std::printf("J(%s, %s) = %.3f\n", names[i].c_str(), names[j].c_str(),
                        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
}

void run_probe(const CLI::App& cmd, InterpOpts& o) {
    Overlay cfg(&cmd, o.common.config);
    cfg.get("--ckpt", o.ckpt);
    cfg.get("--data", o.data);
    cfg.get("--scenes", o.scenes);
    cfg.get("--which", o.which);
    cfg.get("--rank", o.rank);
    check_config(!o.ckpt.empty() && !o.data.empty(), "probe needs --ckpt and --data");
    check_config(o.which == "all" || o.which == "binding" ||
                     o.which == "numerosity" || o.which == "attnlens",
                 "--which is binding, numerosity, attnlens or all");
    std::string out_root = resolve_out(o.common);

    auto [params, vocab] = load_model(o.ckpt);
    Dataset ds = read_dataset(o.data);

    // One entry per scene, a plain counting prompt.
    QARecord rec;
    rec.task = Task::Count;
    rec.prompt_words = prompt_words(Task::Count);
    int limit = o.scenes > 0 ? o.scenes : static_cast<int>(ds.scenes.size());

    json echo{{"ckpt", o.ckpt}, {"data", o.data}, {"which", o.which},
              {"scenes", std::min<std::size_t>(ds.scenes.size(),
                                               static_cast<std::size_t>(limit))},
              {"rank", o.rank}};
    json rep = report_envelope("probe", echo);

    if (o.which == "all" || o.which == "binding") {
        std::vector<BindingScene> scenes;
        for (const RenderedScene& sc : ds.scenes) {
            if (static_cast<int>(scenes.size()) >= limit) break;
            if (sc.count() < 2) continue;  // pairs need two objects
            BindingScene b;
            b.seq = build_sequence(sc, rec, vocab, false);
            b.patch_object = patch_object_labels(sc);
            scenes.push_back(std::move(b));
        }
        BindingConfig bc;
        bc.rank = o.rank;
        bc.seed = o.seed;
        if (o.probe_epochs > 0) bc.epochs = o.probe_epochs;
        BindingResult br = binding_probe(params, scenes, bc);
        rep["binding"] = {{"auc", br.auc},
                          {"auc_shuffled", br.auc_shuffled},
                          {"best_level", br.best_level},
                          {"n_scenes", scenes.size()}};
        std::printf("binding best AUC %.3f at level %d\n",
                    br.auc[static_cast<std::size_t>(br.best_level)], br.best_level);
    }
    if (o.which == "all" || o.which == "numerosity") {
        std::vector<NumerosityScene> scenes;
        for (const RenderedScene& sc : ds.scenes) {
            if (static_cast<int>(scenes.size()) >= limit) break;
            NumerosityScene n;
            n.seq = build_sequence(sc, rec, vocab, false);
            n.object_patches = scene_object_patches(sc);
            n.count = sc.count();
            scenes.push_back(std::move(n));
        }
        NumerosityConfig nc;
        nc.seed = o.seed;
        if (o.probe_epochs > 0) nc.epochs = o.probe_epochs;
        NumerosityResult nr = numerosity_probe(params, scenes, nc);
        rep["numerosity"] = {{"accuracy", nr.accuracy}, {"n_scenes", scenes.size()}};
        std::printf("numerosity level-0 acc %.3f, best %.3f\n", nr.accuracy[0],
                    *std::max_element(nr.accuracy.begin(), nr.accuracy.end()));
    }
    if (o.which == "all" || o.which == "attnlens") {
        auto corpus = scored_corpus(ds, vocab, Task::Count, limit);
        Lexicons lex = Lexicons::standard(vocab);
        AttnLensConfig ac;
        ac.seed = o.seed;
        if (o.probe_epochs > 0) ac.epochs = o.probe_epochs;
        AttnLensResult ar = attnlens_probes(params, corpus, lex, vocab, ac);
        rep["attnlens"] = {{"kl", matrix_json(ar.kl)},
                           {"vgs", matrix_json(ar.vgs)},
                           {"vgs_best_mean_ratio", ar.vgs_best_mean_ratio}};
        if (!o.translators.empty()) {
            TranslatorSet ts = get_translators(params, corpus, o, nullptr);
            auto reports = score_heads(params, ts, corpus, lex, vocab);
            Eigen::MatrixXd hv =
                report_matrix(reports, params.cfg, &HeadReport::vgs);
            double mean = hv.mean();
            rep["headlens_vgs_best_mean_ratio"] =
                mean > 0 ? hv.maxCoeff() / mean : 0.0;
        }
        std::printf("attention-probe VGS best/mean %.2f\n", ar.vgs_best_mean_ratio);
    }
    write_json_file(out_root + "/probe_report.json", rep);
}

void run_yesband(const CLI::App& cmd, InterpOpts& o) {
    Overlay cfg(&cmd, o.common.config);
    cfg.get("--ckpt", o.ckpt);
    cfg.get("--data", o.data);
    cfg.get("--scenes", o.scenes);
    cfg.get("--k-lo", o.k_lo);
    cfg.get("--k-hi", o.k_hi);
    check_config(!o.ckpt.empty() && !o.data.empty(), "yesband needs --ckpt and --data");
    std::string out_root = resolve_out(o.common);

    auto [params, vocab] = load_model(o.ckpt);
    Dataset ds = read_dataset(o.data);
    int k_hi = o.k_hi >= 0 ? o.k_hi : vocab.max_count();

    json scenes = json::array();
    std::map<int, std::vector<const YesBandResult*>> by_count;
    std::vector<YesBandResult> results;
    results.reserve(ds.scenes.size());
    for (const RenderedScene& sc : ds.scenes) {
        if (o.scenes > 0 && static_cast<int>(results.size()) >= o.scenes) break;
        results.push_back(yes_band(params, vocab, sc, o.k_lo, k_hi));
    }
    for (const YesBandResult& r : results) {
        by_count[r.gt].push_back(&r);
        scenes.push_back({{"gt", r.gt},
                          {"yes", r.yes},
                          {"band_lo", r.band_lo},
                          {"band_hi", r.band_hi},
                          {"band_width", r.band_width},
                          {"oscillations", r.oscillations}});
    }

    std::vector<CurveRow> rows;
    json agg = json::array();
    for (const auto& [count, rs] : by_count) {
        double w = 0, osc = 0, at_gt = 0;
        for (const YesBandResult* r : rs) {
            w += r->band_width;
            osc += r->oscillations;
            at_gt += r->band_width > 0;
        }
        double n = static_cast<double>(rs.size());
        agg.push_back({{"count", count},
                       {"n", rs.size()},
                       {"mean_band_width", w / n},
                       {"mean_oscillations", osc / n},
                       {"yes_at_gt_rate", at_gt / n}});
        rows.push_back({count, "band_width", w / n});
        rows.push_back({count, "oscillations", osc / n});
        rows.push_back({count, "yes_at_gt", at_gt / n});
    }

    json echo{{"ckpt", o.ckpt}, {"data", o.data}, {"k_lo", o.k_lo}, {"k_hi", k_hi}};
    json rep = report_envelope("yesband", echo);
    rep["scenes"] = scenes;
    rep["by_count"] = agg;
    write_json_file(out_root + "/yesband_report.json", rep);
    write_curve_csv(out_root + "/yesband_curve.csv", rows);
    std::printf("%d scenes probed, K in [%d, %d]\n",
                static_cast<int>(results.size()), o.k_lo, k_hi);
}

void add_translator_opts(CLI::App* cmd, InterpOpts& o) {
    cmd->add_option("--translators", o.translators,
                    "translator file; loaded when present, else trained");
    cmd->add_option("--save-translators", o.save_translators,
                    "write trained translators here");
    cmd->add_option("--tr-epochs", o.tr_epochs, "translator training epochs");
    cmd->add_option("--tr-lr", o.tr_lr, "translator learning rate");
}

}  // namespace

void register_interp(CLI::App& app) {
    auto o = std::make_shared<InterpOpts>();
    CLI::App* interp =
        app.add_subcommand("interp", "lenses, patching, ablation and probes");
    interp->require_subcommand(1);

    CLI::App* lens = interp->add_subcommand(
        "lens", "layer-wise rank of the answer token through the unembedding");
    lens->add_option("--ckpt", o->ckpt, "checkpoint")->required();
    lens->add_option("--data", o->data, "dataset directory")->required();
    lens->add_option("--scenes", o->scenes, "probe-set size cap");
    lens->add_option("--task", o->task, "record task");
    lens->add_option("--seed", o->seed, "training seed");
    add_translator_opts(lens, *o);
    add_common(lens, o->common);
    lens->callback([o, lens]() { run_lens(*lens, *o); });

    CLI::App* hl = interp->add_subcommand(
        "headlens", "per-head decoded tokens, scores and categories");
    hl->add_option("--ckpt", o->ckpt, "checkpoint")->required();
    hl->add_option("--data", o->data, "dataset directory")->required();
    hl->add_option("--scenes", o->scenes, "corpus size cap");
    hl->add_option("--task", o->task, "record task");
    hl->add_option("--seed", o->seed, "training seed");
    hl->add_option("--gammas", o->gammas, "head importance file for categorization");
    hl->add_option("--th-importance", o->th.importance, "importance threshold");
    hl->add_option("--th-top1", o->th.top1, "top-1 accuracy threshold");
    hl->add_option("--th-img-attn", o->th.img_attn, "image-attention threshold");
    hl->add_option("--th-yesno", o->th.yesno, "yes/no mass threshold");
    hl->add_option("--early-frac", o->th.early_frac, "early-layer fraction");
    hl->add_option("--vgs-top", o->th.vgs_top, "VGS rank cutoff");
    add_translator_opts(hl, *o);
    add_common(hl, o->common);
    hl->callback([o, hl]() { run_headlens(*hl, *o); });

    CLI::App* vl = interp->add_subcommand(
        "vap-layer", "layer-wise overwrite rates from activation patching");
    vl->add_option("--ckpt", o->ckpt, "checkpoint")->required();
    vl->add_option("--pairs", o->pairs, "pair corpus directory")->required();
    vl->add_option("--group", o->groups,
                   "token group (repeatable; default: all groups)");
    add_common(vl, o->common);
    vl->callback([o, vl]() { run_vap_layer(*vl, *o); });

    CLI::App* vh = interp->add_subcommand(
        "vap-head", "per-head patching importance (answer logit difference)");
    vh->add_option("--ckpt", o->ckpt, "checkpoint")->required();
    vh->add_option("--pairs", o->pairs, "pair corpus directory")->required();
    add_common(vh, o->common);
    vh->callback([o, vh]() { run_vap_head(*vh, *o); });

    CLI::App* ab = interp->add_subcommand(
        "ablate", "mean-ablation importance and the top-K head set");
    ab->add_option("--ckpt", o->ckpt, "checkpoint")->required();
    ab->add_option("--data", o->data, "dataset directory")->required();
    ab->add_option("--scenes", o->scenes, "corpus size cap");
    ab->add_option("--task", o->task, "record task");
    ab->add_option("--top-k", o->top_k, "head-set size");
    ab->add_option("--cache-dir", o->cache_dir, "mean/degradation cache directory");
    ab->add_flag("--no-cache", o->no_cache, "recompute without touching the cache");
    add_common(ab, o->common);
    ab->callback([o, ab]() { run_ablate(*ab, *o); });

    CLI::App* jc = interp->add_subcommand(
        "jaccard", "overlap between ranked head sets across tasks");
    jc->add_option("--ckpt", o->ckpt, "checkpoint (needed with --corpus)");
    jc->add_option("--set", o->sets, "name=headset.json (repeatable)");
    jc->add_option("--corpus", o->corpora,
                   "task=dataset-dir; computes that task's top-K set (repeatable)");
    jc->add_option("--top-k", o->top_k, "head-set size for --corpus");
    jc->add_option("--scenes", o->scenes, "corpus size cap");
    add_common(jc, o->common);
    jc->callback([o, jc]() { run_jaccard(*jc, *o); });

    CLI::App* pr = interp->add_subcommand(
        "probe", "binding, numerosity and per-head readout probes");
    pr->add_option("--ckpt", o->ckpt, "checkpoint")->required();
    pr->add_option("--data", o->data, "dataset directory")->required();
    pr->add_option("--which", o->which, "binding, numerosity, attnlens or all");
    pr->add_option("--scenes", o->scenes, "scene cap");
    pr->add_option("--rank", o->rank, "binding probe rank");
    pr->add_option("--probe-epochs", o->probe_epochs, "override probe epochs");
    pr->add_option("--seed", o->seed, "probe seed");
    add_translator_opts(pr, *o);
    add_common(pr, o->common);
    pr->callback([o, pr]() { run_probe(*pr, *o); });

    CLI::App* yb = interp->add_subcommand(
        "yesband", "yes/no verification bands over a count sweep");
    yb->add_option("--ckpt", o->ckpt, "checkpoint")->required();
    yb->add_option("--data", o->data, "dataset directory")->required();
    yb->add_option("--scenes", o->scenes, "scene cap");
    yb->add_option("--k-lo", o->k_lo, "lowest probed count");
    yb->add_option("--k-hi", o->k_hi, "highest probed count (default vocab max)");
    add_common(yb, o->common);
    yb->callback([o, yb]() { run_yesband(*yb, *o); });
}

}  // namespace countlab
