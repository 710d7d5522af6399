#pragma once

#include <Eigen/Core>
#include <vector>

#include "countlab/model.hpp"
#include "countlab/sequence.hpp"
#include "countlab/trace.hpp"

namespace countlab {

// Everything the backward pass needs, kept per layer.
struct LayerCache {
    Eigen::MatrixXd x_in;  // block input (post residual override)
    Eigen::MatrixXd n1;
    Eigen::VectorXd ir1;  // per-token inverse rms
    Eigen::MatrixXd q, k, v;
    std::vector<Eigen::MatrixXd> attn;      // post-softmax, upper triangle zero
    std::vector<Eigen::MatrixXd> head_out;  // value entering W_O (post override/scale)
    std::vector<char> head_overridden;
    std::vector<double> head_beta, head_scale;
    Eigen::MatrixXd concat, attn_out, x_mid;
    Eigen::MatrixXd n2;
    Eigen::VectorXd ir2;
    Eigen::MatrixXd m1, h1, mlp_out;
};

struct ForwardCache {
    Eigen::MatrixXd patch_mat;  // image-token patch pixels in [0,1]
    Eigen::MatrixXd x0;         // embedding output (post level-0 override)
    std::vector<LayerCache> layers;
    Eigen::MatrixXd x_final;  // == layers.back() output post override
    Eigen::VectorXd irf;
    Eigen::MatrixXd nf, logits;
    std::vector<std::vector<Eigen::MatrixXd>> scores;  // kept only when asked
};

void run_forward(const Params& params, const TokenSequence& seq,
                 const OverrideSet& overrides, ForwardCache& fc, bool keep_scores);

void rmsnorm_rows_cached(const Eigen::MatrixXd& x, const Eigen::VectorXd& gain,
                         Eigen::MatrixXd& out, Eigen::VectorXd& inv_rms);

double gelu(double x);
double gelu_grad(double x);

}  // namespace countlab
