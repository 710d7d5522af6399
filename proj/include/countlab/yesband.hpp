#pragma once

#include <vector>

#include "countlab/model.hpp"
#include "countlab/scene.hpp"
#include "countlab/vocab.hpp"

namespace countlab {

struct YesBandResult {
    int gt = 0;
    std::vector<int> ks;         // probed values, ascending
    std::vector<int> yes;        // 1 for a yes answer, 0 otherwise
    int band_lo = -1;            // maximal contiguous yes-run containing gt
    int band_hi = -1;
    int band_width = 0;          // 0 when the model says no at the true count
    int oscillations = 0;        // adjacent response switches
};

// Ask "are there K objects" for each K in [k_lo, k_hi] and read the band.
YesBandResult yes_band(const Params& params, const Vocab& vocab,
                       const RenderedScene& scene, int k_lo, int k_hi);

// Band statistics from a bare response vector (pure; used by tests).
YesBandResult band_stats(int gt, const std::vector<int>& ks,
                         const std::vector<int>& yes);

}  // namespace countlab
