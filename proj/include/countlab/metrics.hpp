#pragma once

#include <string>
#include <vector>

#include "countlab/model.hpp"
#include "countlab/sequence.hpp"
#include "countlab/trace.hpp"
#include "countlab/vocab.hpp"

namespace countlab {

// A nonempty unsigned digit string parses to its value; everything else is -1.
int parse_answer(const std::string& raw);

struct PredictionRecord {
    int gt = 0;
    std::string raw;
    int parsed = -1;
};

struct PerCountMetrics {
    int count = 0;
    int n = 0;
    double acc = 0, mae = 0, rmse = 0, obo = 0;
};

struct MetricsReport {
    double acc = 0, mae = 0, rmse = 0, obo = 0;
    int n = 0;
    double parse_failure_rate = 0;
    std::vector<PerCountMetrics> per_count;  // ascending by count
};

// ACC = mean 1[p=y]; MAE = mean |p-y|; RMSE = sqrt(mean (p-y)^2);
// OBO = mean 1[|p-y| <= 1]. The -1 sentinel enters the formulas as a value.
MetricsReport compute_metrics(const std::vector<PredictionRecord>& records);

struct EvalResult {
    MetricsReport metrics;
    std::vector<PredictionRecord> records;  // input order
};

// Greedy decode each prompt, parse, aggregate. Overrides apply to every
// forward (intervention evaluation). Per-scene work shards across threads;
// results are identical at any thread count.
EvalResult eval_model(const Params& params, const Vocab& vocab,
                      const std::vector<TokenSequence>& prompts,
                      const std::vector<int>& gt_counts,
                      const OverrideSet& ov = {}, int threads = 1);

}  // namespace countlab
