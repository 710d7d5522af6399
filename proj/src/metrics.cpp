#include "countlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>

#include "countlab/common.hpp"
#include "countlab/forward.hpp"

namespace countlab {

int parse_answer(const std::string& raw) {
    if (raw.empty() || raw.size() > 6) return -1;
    long value = 0;
    for (char c : raw) {
        if (c < '0' || c > '9') return -1;
        value = value * 10 + (c - '0');
    }
    return static_cast<int>(value);
}

namespace {

void fill_metrics(const std::vector<const PredictionRecord*>& recs, int* n,
                  double* acc, double* mae, double* rmse, double* obo) {
    long long hits = 0, within1 = 0, abs_sum = 0, sq_sum = 0;
    for (const PredictionRecord* r : recs) {
        long long d = static_cast<long long>(r->parsed) - r->gt;
        long long a = std::llabs(d);
        hits += a == 0;
        within1 += a <= 1;
        abs_sum += a;
        sq_sum += d * d;
    }
    double count = static_cast<double>(recs.size());
    *n = static_cast<int>(recs.size());
    *acc = static_cast<double>(hits) / count;
    *mae = static_cast<double>(abs_sum) / count;
    *rmse = std::sqrt(static_cast<double>(sq_sum) / count);
    *obo = static_cast<double>(within1) / count;
}

}  // namespace

MetricsReport compute_metrics(const std::vector<PredictionRecord>& records) {
    check_data(!records.empty(), "no prediction records");
    MetricsReport rep;

    std::vector<const PredictionRecord*> all;
    std::map<int, std::vector<const PredictionRecord*>> by_count;
    long long failures = 0;
    for (const PredictionRecord& r : records) {
        all.push_back(&r);
        by_count[r.gt].push_back(&r);
        failures += r.parsed == -1;
    }
    fill_metrics(all, &rep.n, &rep.acc, &rep.mae, &rep.rmse, &rep.obo);
    rep.parse_failure_rate = failures / static_cast<double>(records.size());
    for (const auto& [count, recs] : by_count) {
        PerCountMetrics pc;
        pc.count = count;
        fill_metrics(recs, &pc.n, &pc.acc, &pc.mae, &pc.rmse, &pc.obo);
        rep.per_count.push_back(pc);
    }
    return rep;
}

EvalResult eval_model(const Params& params, const Vocab& vocab,
                      const std::vector<TokenSequence>& prompts,
                      const std::vector<int>& gt_counts, const OverrideSet& ov,
                      int threads) {
    check_data(!prompts.empty(), "empty evaluation split");
    check_data(prompts.size() == gt_counts.size(),
               "prompt and ground-truth counts differ");
    EvalResult out;
    out.records.resize(prompts.size());
    parallel_for(prompts.size(), threads, [&](std::size_t i) {
        int tok = generate_answer(params, prompts[i], ov);
        PredictionRecord& rec = out.records[i];
        rec.gt = gt_counts[i];
        rec.raw = vocab.token(tok);
        rec.parsed = parse_answer(rec.raw);
    });
    out.metrics = compute_metrics(out.records);
    return out;
}

}  // namespace countlab
