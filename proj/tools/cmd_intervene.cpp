#include <cstdio>
#include <memory>

#include "countlab/metrics.hpp"
#include "countlab/reports.hpp"
#include "countlab/temperature.hpp"
#include "tool_common.hpp"

namespace countlab {

namespace {

struct IntOpts {
    CommonOpts common;
    std::string ckpt;
    std::string data;
    std::string gammas;
    double alpha = 1.2;
    double eta = 0.1;
    bool raw = false;  // skip mean-1 normalization of gamma
    std::string sweep;
    int scenes = 50;   // entropy sample size
    std::string heads_report;
    int k = 2;
    // grid row checkpoints
    std::string baseline, sft, focus;
};

json beta_echo(const OverrideSet& ov) {
    json arr = json::array();
    for (const auto& [key, beta] : ov.beta)
        arr.push_back(
            {{"layer", key.first}, {"head", key.second}, {"beta", beta}});
    return arr;
}

json scale_echo(const OverrideSet& ov) {
    json arr = json::array();
    for (const auto& [key, s] : ov.out_scale)
        arr.push_back({{"layer", key.first}, {"head", key.second}, {"scale", s}});
    return arr;
}

// Mean attention-row entropy of the targeted heads over a scene sample.
double mean_entropy(const Params& params, const std::vector<TokenSequence>& seqs,
                    const OverrideSet& ov,
                    const std::vector<std::pair<int, int>>& heads) {
    double sum = 0;
    std::size_t n = 0;
    for (const TokenSequence& seq : seqs) {
        auto ent = attention_row_entropies(params, seq, ov, heads);
        for (double e : ent) sum += e;
        n += ent.size();
    }
    return n > 0 ? sum / static_cast<double>(n) : 0.0;
}

void run_temperature(const CLI::App& cmd, IntOpts& o) {
    Overlay cfg(&cmd, o.common.config);
    cfg.get("--ckpt", o.ckpt);
    cfg.get("--data", o.data);
    cfg.get("--gammas", o.gammas);
    cfg.get("--alpha", o.alpha);
    cfg.get("--sweep", o.sweep);
    cfg.get("--scenes", o.scenes);
    check_config(!o.ckpt.empty() && !o.data.empty() && !o.gammas.empty(),
                 "temperature needs --ckpt, --data and --gammas");
    std::string out_root = resolve_out(o.common);

    auto [params, vocab] = load_model(o.ckpt);
    Dataset ds = read_dataset(o.data);
    EvalCorpus corpus = eval_corpus(ds, vocab);

    TemperatureConfig tc;
    tc.alpha = o.alpha;
    tc.head_gammas = read_head_values(o.gammas);
    tc.normalize_gamma = !o.raw;

    std::vector<std::pair<int, int>> heads;
    for (const auto& [key, g] : tc.head_gammas) heads.push_back(key);
    std::vector<TokenSequence> sample(
        corpus.prompts.begin(),
        corpus.prompts.begin() +
            std::min<std::size_t>(corpus.prompts.size(),
                                  static_cast<std::size_t>(o.scenes)));

    json echo{{"ckpt", o.ckpt},   {"data", o.data}, {"gammas", o.gammas},
              {"alpha", o.alpha}, {"raw", o.raw},   {"sweep", o.sweep}};
    json rep = report_envelope("temperature", echo);

    EvalResult base = eval_model(params, vocab, corpus.prompts, corpus.gts, {},
                                 o.common.threads);
    rep["baseline"] = metrics_json(base.metrics);
    rep["baseline_entropy"] = mean_entropy(params, sample, {}, heads);

    OverrideSet ov = apply_temperature(tc);
    rep["beta"] = beta_echo(ov);
    EvalResult ev =
        eval_model(params, vocab, corpus.prompts, corpus.gts, ov, o.common.threads);
    rep["intervened"] = metrics_json(ev.metrics);
    rep["intervened_entropy"] = mean_entropy(params, sample, ov, heads);

    if (!o.sweep.empty()) {
        json sw = json::array();
        for (double alpha : parse_double_list(o.sweep)) {
            TemperatureConfig stc = tc;
            stc.alpha = alpha;
            OverrideSet sov = apply_temperature(stc);
            EvalResult sev = eval_model(params, vocab, corpus.prompts, corpus.gts,
                                        sov, o.common.threads);
            sw.push_back({{"alpha", alpha},
                          {"metrics", metrics_json(sev.metrics)},
                          {"entropy", mean_entropy(params, sample, sov, heads)}});
        }
        rep["sweep"] = sw;
    }
    write_json_file(out_root + "/temperature_report.json", rep);
    std::printf("acc %.4f -> %.4f\n", base.metrics.acc, ev.metrics.acc);
}

void run_reweight(const CLI::App& cmd, IntOpts& o) {
    Overlay cfg(&cmd, o.common.config);
    cfg.get("--ckpt", o.ckpt);
    cfg.get("--data", o.data);
    cfg.get("--gammas", o.gammas);
    cfg.get("--eta", o.eta);
    check_config(!o.ckpt.empty() && !o.data.empty() && !o.gammas.empty(),
                 "reweight needs --ckpt, --data and --gammas");
    std::string out_root = resolve_out(o.common);

    auto [params, vocab] = load_model(o.ckpt);
    Dataset ds = read_dataset(o.data);
    EvalCorpus corpus = eval_corpus(ds, vocab);

    ReweightConfig rc;
    rc.eta = o.eta;
    rc.head_gammas = read_head_values(o.gammas);
    rc.normalize_gamma = !o.raw;

    json echo{{"ckpt", o.ckpt}, {"data", o.data}, {"gammas", o.gammas},
              {"eta", o.eta},   {"raw", o.raw}};
    json rep = report_envelope("reweight", echo);

    EvalResult base = eval_model(params, vocab, corpus.prompts, corpus.gts, {},
                                 o.common.threads);
    rep["baseline"] = metrics_json(base.metrics);

    OverrideSet ov = apply_reweight(rc);
    rep["out_scale"] = scale_echo(ov);
    EvalResult ev =
        eval_model(params, vocab, corpus.prompts, corpus.gts, ov, o.common.threads);
    rep["intervened"] = metrics_json(ev.metrics);
    write_json_file(out_root + "/reweight_report.json", rep);
    std::printf("acc %.4f -> %.4f\n", base.metrics.acc, ev.metrics.acc);
}

void run_select_layers(const CLI::App& cmd, IntOpts& o) {
    Overlay cfg(&cmd, o.common.config);
    cfg.get("--heads", o.heads_report);
    cfg.get("--k", o.k);
    check_config(!o.heads_report.empty(), "select-layers needs --heads");
    std::string out_root = resolve_out(o.common);

    json j = read_json_file(o.heads_report);
    check_data(j.contains("heads") && j["heads"].is_array(),
               "not a head report: " + o.heads_report);
    std::vector<HeadReport> reports;
    int n_layers = 0;
    for (const auto& e : j["heads"]) {
        HeadReport r;
        r.layer = e.at("layer").get<int>();
        r.head = e.at("head").get<int>();
        r.category = e.value("category", "Unclassified");
        n_layers = std::max(n_layers, r.layer + 1);
        reports.push_back(std::move(r));
    }
    std::vector<int> layers = select_focus_layers(reports, n_layers, o.k);

    json echo{{"heads", o.heads_report}, {"k", o.k}};
    json rep = report_envelope("select_layers", echo);
    rep["layers"] = layers;  // 1-based
    write_json_file(out_root + "/focus_layers.json", rep);
    std::printf("focus layers (1-based):");
    for (int l : layers) std::printf(" %d", l);
    std::printf("\n");
}

void run_grid(const CLI::App& cmd, IntOpts& o) {
    Overlay cfg(&cmd, o.common.config);
    cfg.get("--data", o.data);
    cfg.get("--baseline", o.baseline);
    cfg.get("--sft", o.sft);
    cfg.get("--focus", o.focus);
    cfg.get("--gammas", o.gammas);
    cfg.get("--alpha", o.alpha);
    check_config(!o.data.empty(), "grid needs --data");
    check_config(!o.sft.empty() || !o.focus.empty() || !o.baseline.empty(),
                 "grid needs at least one row checkpoint");
    std::string out_root = resolve_out(o.common);

    Dataset ds = read_dataset(o.data);
    json echo{{"data", o.data},         {"baseline", o.baseline},
              {"sft", o.sft},           {"focus", o.focus},
              {"gammas", o.gammas},     {"alpha", o.alpha}};
    json rep = report_envelope("grid", echo);
    json rows = json::array();
    std::vector<CurveRow> csv;

    auto add_row = [&](const std::string& name, const std::string& ckpt,
                       const OverrideSet& ov) {
        auto [params, vocab] = load_model(ckpt);
        EvalCorpus corpus = eval_corpus(ds, vocab);
        EvalResult ev = eval_model(params, vocab, corpus.prompts, corpus.gts, ov,
                                   o.common.threads);
        rows.push_back({{"row", name}, {"metrics", metrics_json(ev.metrics)}});
        int idx = static_cast<int>(rows.size());
        csv.push_back({idx, name + ":acc", ev.metrics.acc});
        csv.push_back({idx, name + ":mae", ev.metrics.mae});
        csv.push_back({idx, name + ":rmse", ev.metrics.rmse});
        csv.push_back({idx, name + ":obo", ev.metrics.obo});
        std::printf("%-22s acc %.4f mae %.4f rmse %.4f obo %.4f\n", name.c_str(),
                    ev.metrics.acc, ev.metrics.mae, ev.metrics.rmse,
                    ev.metrics.obo);
    };

    if (!o.baseline.empty()) add_row("baseline", o.baseline, {});
    if (!o.sft.empty()) add_row("sft", o.sft, {});
    if (!o.focus.empty()) add_row("sft+focus", o.focus, {});
    if (!o.focus.empty() && !o.gammas.empty()) {
        TemperatureConfig tc;
        tc.alpha = o.alpha;
        tc.head_gammas = read_head_values(o.gammas);
        tc.normalize_gamma = !o.raw;
        OverrideSet ov = apply_temperature(tc);
        rep["beta"] = beta_echo(ov);
        add_row("sft+focus+temperature", o.focus, ov);
    }
    rep["rows"] = rows;
    write_json_file(out_root + "/grid_report.json", rep);
    write_curve_csv(out_root + "/grid_table.csv", csv);
}

}  // namespace

void register_intervene(CLI::App& app) {
    auto o = std::make_shared<IntOpts>();
    CLI::App* iv = app.add_subcommand(
        "intervene", "training-free attention interventions and ablation grids");
    iv->require_subcommand(1);

    CLI::App* tp = iv->add_subcommand(
        "temperature", "sharpen targeted heads' attention by beta = alpha * gamma");
    tp->add_option("--ckpt", o->ckpt, "checkpoint")->required();
    tp->add_option("--data", o->data, "evaluation dataset")->required();
    tp->add_option("--gammas", o->gammas, "head importance file")->required();
    tp->add_option("--alpha", o->alpha, "global inverse-temperature factor");
    tp->add_flag("--raw", o->raw, "use gammas as given, skip normalization");
    tp->add_option("--sweep", o->sweep, "alpha sweep, e.g. 1.1,1.2,1.3");
    tp->add_option("--scenes", o->scenes, "entropy sample size");
    add_common(tp, o->common);
    tp->callback([o, tp]() { run_temperature(*tp, *o); });

    CLI::App* rw = iv->add_subcommand(
        "reweight", "scale targeted heads' outputs by 1 + eta * gamma");
    rw->add_option("--ckpt", o->ckpt, "checkpoint")->required();
    rw->add_option("--data", o->data, "evaluation dataset")->required();
    rw->add_option("--gammas", o->gammas, "head importance file")->required();
    rw->add_option("--eta", o->eta, "reweight strength");
    rw->add_flag("--raw", o->raw, "use gammas as given, skip normalization");
    add_common(rw, o->common);
    rw->callback([o, rw]() { run_reweight(*rw, *o); });

    CLI::App* sl = iv->add_subcommand(
        "select-layers", "pick focus layers from head categories");
    sl->add_option("--heads", o->heads_report, "head report JSON")->required();
    sl->add_option("--k", o->k, "number of layers");
    add_common(sl, o->common);
    sl->callback([o, sl]() { run_select_layers(*sl, *o); });

    CLI::App* gr = iv->add_subcommand(
        "grid", "component table: baseline / sft / sft+focus / +temperature");
    gr->add_option("--data", o->data, "evaluation dataset")->required();
    gr->add_option("--baseline", o->baseline, "untrained checkpoint");
    gr->add_option("--sft", o->sft, "answer-loss-only checkpoint");
    gr->add_option("--focus", o->focus, "answer+focus checkpoint");
    gr->add_option("--gammas", o->gammas, "head importance file (temperature row)");
    gr->add_option("--alpha", o->alpha, "temperature factor");
    add_common(gr, o->common);
    gr->callback([o, gr]() { run_grid(*gr, *o); });
}

}  // namespace countlab
