#pragma once

#include <Eigen/Core>
#include <vector>

#include "countlab/model.hpp"
#include "countlab/sequence.hpp"
#include "countlab/trace.hpp"

namespace countlab {

inline constexpr double kNormEps = 1e-6;

ActivationTrace forward(const Params& params, const TokenSequence& seq,
                        const OverrideSet& overrides = {},
                        const CaptureFlags& capture = {});

// Mean cross-entropy over the sequence's answer targets; positions outside
// the answer contribute exactly nothing.
double loss_sft_from_logits(const Eigen::MatrixXd& logits,
                            const std::vector<std::pair<int, int>>& answer_targets);
double loss_sft(const Params& params, const TokenSequence& seq_with_answer);

// Greedy argmax at the last prompt position (ties break to the lowest id).
int generate_answer(const Params& params, const TokenSequence& prompt_only,
                    const OverrideSet& overrides = {});

// Shared numeric helpers.
Eigen::MatrixXd rmsnorm_rows(const Eigen::MatrixXd& x, const Eigen::VectorXd& gain);
Eigen::VectorXd softmax(const Eigen::VectorXd& z);
// Indices of the k largest entries, value descending, ties by index ascending.
std::vector<int> top_k_indices(const Eigen::VectorXd& v, int k);
// Final norm + unembedding applied to one residual vector (the logit lens).
Eigen::VectorXd unembed_residual(const Params& params, const Eigen::VectorXd& resid);

}  // namespace countlab
