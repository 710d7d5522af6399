#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "countlab/heads.hpp"
#include "countlab/model.hpp"
#include "countlab/sequence.hpp"
#include "countlab/vocab.hpp"

namespace countlab {

// Mann-Whitney AUC of scores against binary labels, ties at mid-rank.
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Patch ownership from generation geometry: patch -> object index, -1 for
// background; a patch claimed by two objects is also -1.
std::vector<int> patch_object_labels(const RenderedScene& scene, int min_px = 1);

// One scene for the binding probe: patch_object[p] is the object index owning
// patch p, or -1 for background/ambiguous patches.
struct BindingScene {
    TokenSequence seq;
    std::vector<int> patch_object;
};

struct BindingConfig {
    int rank = 16;
    int epochs = 6;
    double lr = 1e-2;
    int holdout_every = 5;  // every n-th scene held out
    std::uint64_t seed = 0;
};

struct BindingResult {
    std::vector<double> auc;           // per residual level 0..L
    std::vector<double> auc_shuffled;  // label-shuffled control
    int best_level = 0;
};

// Pair score (W x_i)^T (W x_j) on same-object vs different-object patch pairs,
// trained with a logistic loss; held-out AUC per residual level.
BindingResult binding_probe(const Params& params,
                            const std::vector<BindingScene>& scenes,
                            const BindingConfig& cfg);

struct NumerosityScene {
    TokenSequence seq;
    std::vector<int> object_patches;
    int count = 0;
};

struct NumerosityConfig {
    int hidden = 32;
    int epochs = 30;
    double lr = 1e-2;
    std::uint64_t seed = 0;
};

struct NumerosityResult {
    std::vector<double> accuracy;  // per residual level 0..L, held-out
};

// Mean-pool the object patches' residuals, train a one-hidden-layer classifier
// on the count, report held-out accuracy per level (80/20, count-stratified).
NumerosityResult numerosity_probe(const Params& params,
                                  const std::vector<NumerosityScene>& scenes,
                                  const NumerosityConfig& cfg);

struct AttnLensConfig {
    int epochs = 3;
    double lr = 5e-3;
    int holdout_every = 5;
    std::uint64_t seed = 0;
};

struct AttnLensResult {
    Eigen::MatrixXd kl;   // layers x heads, held-out KL(probe || final)
    Eigen::MatrixXd vgs;  // layers x heads, probe-decoded top-10 visual share
    double vgs_best_mean_ratio = 0;
};

// Per-head affine probe d_head -> d_model trained like the translators; its
// decoded distributions give a per-head VGS for the discriminability
// comparison against the shared-translator readout.
AttnLensResult attnlens_probes(const Params& params,
                               const std::vector<ScoredScene>& corpus,
                               const Lexicons& lex, const Vocab& vocab,
                               const AttnLensConfig& cfg);

}  // namespace countlab
