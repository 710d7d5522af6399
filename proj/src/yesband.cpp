#include "countlab/yesband.hpp"

#include "countlab/common.hpp"
#include "countlab/dataset.hpp"
#include "countlab/forward.hpp"
#include "countlab/sequence.hpp"

namespace countlab {

YesBandResult band_stats(int gt, const std::vector<int>& ks,
                         const std::vector<int>& yes) {
    check_contract(ks.size() == yes.size() && !ks.empty(),
                   "response vector shape mismatch");
    YesBandResult out;
    out.gt = gt;
    out.ks = ks;
    out.yes = yes;
    for (std::size_t i = 1; i < yes.size(); ++i)
        out.oscillations += yes[i] != yes[i - 1];

    for (std::size_t i = 0; i < ks.size(); ++i) {
        if (ks[i] != gt || yes[i] != 1) continue;
        std::size_t lo = i, hi = i;
        while (lo > 0 && yes[lo - 1] == 1) --lo;
        while (hi + 1 < yes.size() && yes[hi + 1] == 1) ++hi;
        out.band_lo = ks[lo];
        out.band_hi = ks[hi];
        out.band_width = static_cast<int>(hi - lo) + 1;
        break;
    }
    return out;
}

YesBandResult yes_band(const Params& params, const Vocab& vocab,
                       const RenderedScene& scene, int k_lo, int k_hi) {
    check_config(k_lo >= 0 && k_lo <= k_hi, "bad probe range");
    std::vector<int> ks, yes;
    for (int k = k_lo; k <= k_hi; ++k) {
        QARecord rec;
        rec.task = Task::Verify;
        rec.probe_k = k;
        rec.prompt_words = prompt_words(Task::Verify, k);
        TokenSequence seq = build_sequence(scene, rec, vocab, false);
        int tok = generate_answer(params, seq);
        ks.push_back(k);
        yes.push_back(tok == vocab.yes() ? 1 : 0);
    }
    return band_stats(static_cast<int>(scene.objects.size()), ks, yes);
}

}  // namespace countlab
