#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <vector>

#include "countlab/backward.hpp"
#include "countlab/model.hpp"
#include "countlab/sequence.hpp"

namespace countlab {

struct TrainConfig {
    int epochs = 2;
    int batch_size = 16;
    double lr = 3e-3;
    double weight_decay = 0.01;  // decoupled, matrices only
    double warmup_frac = 0.03;   // linear warmup, then linear decay to zero
    double clip_norm = 1.0;      // global gradient norm
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;  // epoch shuffling
    int log_every = 0;       // steps between progress lines; 0 silences them
    std::function<void(int epoch, const Params& model)> on_epoch;
};

struct TrainStats {
    int steps = 0;
    std::vector<double> epoch_loss;  // mean total loss per epoch
    std::vector<double> epoch_sft;
    std::vector<double> epoch_focus;
};

// Optimizes the model in place. When focus is set, priors must hold one focus
// prior per sequence. Runs are bit-deterministic for a fixed seed and inputs;
// a non-finite loss or gradient aborts with NumericError.
TrainStats train(Params& model, const std::vector<TokenSequence>& data,
                 const std::vector<Eigen::VectorXd>* priors,
                 const FocusConfig* focus, const TrainConfig& cfg);

}  // namespace countlab
