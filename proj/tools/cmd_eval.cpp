#include <algorithm>
#include <cstdio>
#include <memory>

#include "countlab/metrics.hpp"
#include "countlab/reports.hpp"
#include "tool_common.hpp"

namespace countlab {

namespace {

struct EvalOpts {
    CommonOpts common;
    std::string data;
    std::vector<std::string> ckpts;
    std::string task = "count";
    std::string ranges;  // csv of lo-hi windows for per-range reports
    std::string report = "eval_report.json";
};

json filtered_metrics(const EvalResult& ev, const EvalCorpus& corpus, int lo,
                      int hi) {
    std::vector<PredictionRecord> subset;
    for (std::size_t i = 0; i < ev.records.size(); ++i)
        if (corpus.gts[i] >= lo && corpus.gts[i] <= hi)
            subset.push_back(ev.records[i]);
    if (subset.empty()) return json{{"n", 0}};
    return metrics_json(compute_metrics(subset));
}

// Mean and spread (max - min) of the four headline metrics across seeds.
json aggregate(const std::vector<MetricsReport>& reps) {
    auto stat = [&](auto field) {
        double sum = 0, lo = 1e300, hi = -1e300;
        for (const MetricsReport& r : reps) {
            double v = field(r);
            sum += v;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        double mean = sum / static_cast<double>(reps.size());
        return json{{"mean", mean}, {"min", lo}, {"max", hi}, {"spread", hi - lo}};
    };
    return json{{"acc", stat([](const MetricsReport& r) { return r.acc; })},
                {"mae", stat([](const MetricsReport& r) { return r.mae; })},
                {"rmse", stat([](const MetricsReport& r) { return r.rmse; })},
                {"obo", stat([](const MetricsReport& r) { return r.obo; })}};
}

void run_eval(const CLI::App& cmd, EvalOpts& o) {
    Overlay cfg(&cmd, o.common.config);
    cfg.get("--data", o.data);
    cfg.get("--ckpt", o.ckpts);
    cfg.get("--task", o.task);
    cfg.get("--ranges", o.ranges);
    cfg.get("--report", o.report);

    check_config(!o.data.empty(), "eval needs --data");
    check_config(!o.ckpts.empty(), "eval needs at least one --ckpt");
    std::string out_root = resolve_out(o.common);

    Dataset ds = read_dataset(o.data);
    Task task = task_from_string(o.task);

    std::vector<std::pair<int, int>> windows;
    if (!o.ranges.empty()) {
        std::string cur;
        for (char c : o.ranges + ",") {
            if (c == ',') {
                if (!cur.empty()) windows.push_back(parse_range(cur));
                cur.clear();
            } else {
                cur.push_back(c);
            }
        }
    }

    json echo{{"data", o.data},
              {"ckpt", o.ckpts},
              {"task", o.task},
              {"ranges", o.ranges}};
    json rep = report_envelope("eval", echo);
    json per_ckpt = json::array();
    std::vector<MetricsReport> all_metrics;

    for (const std::string& path : o.ckpts) {
        auto [params, vocab] = load_model(path);
        EvalCorpus corpus = eval_corpus(ds, vocab, task);
        EvalResult ev =
            eval_model(params, vocab, corpus.prompts, corpus.gts, {}, o.common.threads);
        json entry{{"ckpt", path}, {"metrics", metrics_json(ev.metrics)}};
        for (auto [lo, hi] : windows) {
            entry["range"][std::to_string(lo) + "-" + std::to_string(hi)] =
                filtered_metrics(ev, corpus, lo, hi);
        }
        per_ckpt.push_back(std::move(entry));
        all_metrics.push_back(ev.metrics);
        std::printf("%s: acc %.4f mae %.4f rmse %.4f obo %.4f (n=%d)\n",
                    path.c_str(), ev.metrics.acc, ev.metrics.mae, ev.metrics.rmse,
                    ev.metrics.obo, ev.metrics.n);
    }
    rep["checkpoints"] = per_ckpt;
    if (all_metrics.size() > 1) rep["aggregate"] = aggregate(all_metrics);

    write_json_file(out_root + "/" + o.report, rep);
}

}  // namespace

void register_eval(CLI::App& app) {
    auto o = std::make_shared<EvalOpts>();
    CLI::App* cmd = app.add_subcommand("eval", "evaluate checkpoints on a dataset");
    cmd->add_option("--data", o->data, "dataset directory")->required();
    cmd->add_option("--ckpt", o->ckpts, "checkpoint path (repeat for seed means)")
        ->required();
    cmd->add_option("--task", o->task, "record task to evaluate (default count)");
    cmd->add_option("--ranges", o->ranges,
                    "per-range sub-reports, e.g. 1-5,6-9 (range extrapolation)");
    cmd->add_option("--report", o->report, "report file name");
    add_common(cmd, o->common);
    cmd->callback([o, cmd]() { run_eval(*cmd, *o); });
}

}  // namespace countlab
