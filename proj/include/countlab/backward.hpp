#pragma once

#include <Eigen/Core>

#include "countlab/focus.hpp"
#include "countlab/model.hpp"
#include "countlab/sequence.hpp"
#include "countlab/trace.hpp"

namespace countlab {

struct LossBreakdown {
    double sft = 0;
    double focus = 0;  // mean focus term, before the lambda weight
    double total = 0;  // sft + lambda * focus
};

// Focus objective plus the per-scene prior it is aimed at.
struct FocusSpec {
    FocusConfig cfg;
    Eigen::VectorXd prior;
};

// Accumulates d(total)/d(params) for one sequence into grads (caller zeroes).
// focus may be null; overrides cut gradients at replaced activations exactly
// like the forward pass treats them as constants.
LossBreakdown backward(const Params& params, const TokenSequence& seq,
                       const FocusSpec* focus, Params& grads,
                       const OverrideSet& overrides = {});

}  // namespace countlab
