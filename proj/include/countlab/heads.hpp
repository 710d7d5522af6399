#pragma once

#include <Eigen/Core>
#include <string>
#include <utility>
#include <vector>

#include "countlab/lens.hpp"
#include "countlab/model.hpp"
#include "countlab/sequence.hpp"

namespace countlab {

// One evaluation scene: a prompt-only sequence, the token the model should
// produce, and which image patches carry objects (from generation).
struct ScoredScene {
    TokenSequence seq;
    int gt_token = -1;
    std::vector<int> object_patches;
};

struct HeadReport {
    int layer = 0;  // 0-based
    int head = 0;
    double importance = 0;  // logit-difference units, filled by vap_headwise
    double img_attn_ratio = 0;
    double obj_in_img_ratio = 0;
    std::vector<int> top10_tokens;
    std::vector<double> top10_probs;  // non-increasing
    double cter = 0;       // top-10 share in the counting lexicon
    double vgs = 0;        // top-10 share in the visual lexicon
    double gt_at_10 = 0;   // ground-truth token seen in the top-10
    double top1_acc = 0;   // top-1 equals the ground-truth token
    double top1_model = 0; // top-1 equals the model's own answer
    double yesno_mass = 0; // decoded probability on yes/no
    std::string category = "Unclassified";
};

// Lens scores for every (layer, head); importance and category stay unset.
std::vector<HeadReport> score_heads(const Params& params, const TranslatorSet& ts,
                                    const std::vector<ScoredScene>& corpus,
                                    const Lexicons& lex, const Vocab& vocab);

// A clean/corrupted scene pair, prompt-only, with the two answer tokens.
struct VapPair {
    TokenSequence clean, corr;
    int clean_answer = -1;
    int corr_answer = -1;
};

struct OverwriteCurve {
    std::vector<std::string> groups;
    Eigen::MatrixXd rate;  // groups x layers, layer l is column l-1
    int n_pairs = 0;
};

// Group names: the six segment tags plus "all".
std::vector<std::string> vap_group_names();
OverwriteCurve vap_layerwise(const Params& params, const std::vector<VapPair>& pairs,
                             const std::vector<std::string>& groups);

// Mean drop in (clean-answer minus corrupted-answer logit) when the head's
// output is replaced with its corrupted counterpart, per head.
Eigen::MatrixXd vap_headwise(const Params& params, const std::vector<VapPair>& pairs);

struct HeadSet {
    std::vector<std::pair<int, int>> heads;  // (layer, head), ranked
    std::string task;
};

// Replace one head's output with its per-position corpus mean; rank heads by
// mean ground-truth-logit degradation; ties break (layer, head) ascending.
// cache_dir+cache_key optionally persist the means and baselines.
HeadSet mean_ablation_importance(const Params& params,
                                 const std::vector<ScoredScene>& corpus,
                                 const std::string& task, int top_k = 20,
                                 const std::string& cache_dir = "",
                                 const std::string& cache_key = "",
                                 Eigen::MatrixXd* degradation = nullptr);

double jaccard(const HeadSet& a, const HeadSet& b);

struct CategorizeThresholds {
    double importance = 0.05;
    double top1 = 0.1;
    double img_attn = 0.5;
    double yesno = 0.25;
    double early_frac = 0.5;  // first half of the layers counts as early
    int vgs_top = 4;          // VGS rank cutoff for grounding heads
};

// Mutually exclusive by rule order: aggregation, routing, awareness candidate,
// grounding, unclassified.
void categorize_heads(std::vector<HeadReport>& reports, int n_layers,
                      const CategorizeThresholds& th);

}  // namespace countlab
