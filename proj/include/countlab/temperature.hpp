#pragma once

#include <Eigen/Core>
#include <map>
#include <utility>
#include <vector>

#include "countlab/heads.hpp"
#include "countlab/model.hpp"
#include "countlab/sequence.hpp"
#include "countlab/trace.hpp"

namespace countlab {

// Training-free sharpening: targeted heads get their attention logits scaled
// by beta_h = alpha * gamma~_h, where gamma~ is the head's importance
// normalized to mean 1 over the targets (negatives clamp to zero first).
struct TemperatureConfig {
    double alpha = 1.2;
    std::map<std::pair<int, int>, double> head_gammas;
    bool normalize_gamma = true;
};
OverrideSet apply_temperature(const TemperatureConfig& cfg);

// Output reweighting: targeted heads' contributions scale by 1 + eta * gamma~_h.
struct ReweightConfig {
    double eta = 0.1;
    std::map<std::pair<int, int>, double> head_gammas;
    bool normalize_gamma = true;
};
OverrideSet apply_reweight(const ReweightConfig& cfg);

// Fragments touch disjoint fields; collisions on the same field are an error.
OverrideSet merge_overrides(const OverrideSet& a, const OverrideSet& b);

// Layers housing the most grounding/routing heads (by category), as 1-based
// layer numbers for the focus objective; ties prefer earlier layers.
std::vector<int> select_focus_layers(const std::vector<HeadReport>& reports,
                                     int n_layers, int k = 2);

// Entropy of every causal attention row of the listed heads, fixed order:
// heads in the given order, then rows 0..n-1. Entropies use the [0..i] support.
std::vector<double> attention_row_entropies(
    const Params& params, const TokenSequence& seq, const OverrideSet& ov,
    const std::vector<std::pair<int, int>>& heads);

}  // namespace countlab
