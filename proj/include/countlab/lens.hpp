#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "countlab/model.hpp"
#include "countlab/sequence.hpp"
#include "countlab/trace.hpp"

namespace countlab {

// 1 + number of strictly larger entries; ties resolve in the token's favor.
int logit_rank(const Eigen::VectorXd& logits, int token);

// Residual stream at one position read through the final norm + unembedding,
// per level 0..L.
struct LensCurve {
    std::vector<Eigen::VectorXd> logits;
    std::vector<int> rank;  // of the probed token
    std::vector<double> prob;
};
LensCurve logit_lens(const Params& params, const ActivationTrace& trace,
                     int position, int token);

// Per-layer affine maps z -> A z + b taking a layer's attention output into
// the space the final readout expects; identity/zero at init, trained to match
// the model's final distribution at every post-image position.
struct TranslatorSet {
    std::vector<Eigen::MatrixXd> a;  // one per layer, d_model x d_model
    std::vector<Eigen::VectorXd> b;  // one per layer, d_model
    int steps = 0;
};

struct TranslatorConfig {
    int epochs = 3;
    double lr = 5e-3;  // constant
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    int holdout_every = 5;  // every n-th sample is held out for the KL stats
    std::uint64_t seed = 0;
};

struct TranslatorStats {
    std::vector<double> kl_before;  // held-out mean KL(translated || final)
    std::vector<double> kl_after;
};

TranslatorSet identity_translators(const ModelConfig& cfg);
TranslatorSet train_translators(const Params& params,
                                const std::vector<TokenSequence>& data,
                                const TranslatorConfig& cfg,
                                TranslatorStats* stats = nullptr);

// Readout of an attention-output-space vector through translator, final norm
// and unembedding.
Eigen::VectorXd translator_logits(const Params& params, const TranslatorSet& ts,
                                  int layer, const Eigen::VectorXd& attn_vec);

// A single head's vocabulary readout: its output through its W_O row block,
// then the layer's translator and the final readout.
Eigen::VectorXd headlens_logits(const Params& params, const TranslatorSet& ts,
                                int layer, int head,
                                const Eigen::VectorXd& head_out);

// Little-endian binary file (magic CLABTRAN); shapes must agree on load.
void save_translators(const TranslatorSet& ts, const std::string& path);
TranslatorSet load_translators(const std::string& path);

}  // namespace countlab
