#include "countlab/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "countlab/common.hpp"

namespace countlab {

namespace {

double schedule_lr(const TrainConfig& cfg, int step, int total_steps) {
    int warmup = std::max(1, static_cast<int>(std::llround(cfg.warmup_frac * total_steps)));
    if (step < warmup) return cfg.lr * (step + 1) / warmup;
    return cfg.lr * (total_steps - step) / static_cast<double>(total_steps - warmup);
}

}  // namespace

TrainStats train(Params& model, const std::vector<TokenSequence>& data,
                 const std::vector<Eigen::VectorXd>* priors,
                 const FocusConfig* focus, const TrainConfig& cfg) {
    check_config(cfg.epochs >= 1, "epochs must be >= 1");
    check_config(cfg.batch_size >= 1, "batch size must be >= 1");
    check_config(cfg.lr > 0, "learning rate must be positive");
    check_data(!data.empty(), "empty training set");
    if (focus != nullptr) {
        check_config(priors != nullptr && priors->size() == data.size(),
                     "focus training needs one prior per sequence");
        resolve_focus_blocks(*focus, model.cfg.n_layers);  // validate up front
    }

    Params grads = zero_like(model);
    Params m1 = zero_like(model);
    Params m2 = zero_like(model);
    std::vector<TensorRef> pr = tensor_refs(model);
    std::vector<TensorRef> gr = tensor_refs(grads);
    std::vector<TensorRef> m1r = tensor_refs(m1);
    std::vector<TensorRef> m2r = tensor_refs(m2);

    int n = static_cast<int>(data.size());
    int steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    int total_steps = cfg.epochs * steps_per_epoch;

    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    FocusSpec spec;
    if (focus != nullptr) spec.cfg = *focus;

    TrainStats stats;
    int step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng(derive_seed(cfg.seed, 0xE70000u + static_cast<std::uint32_t>(epoch)));
        rng.shuffle(order);

        double ep_total = 0, ep_sft = 0, ep_focus = 0;
        for (int b = 0; b < steps_per_epoch; ++b) {
            int lo = b * cfg.batch_size;
            int hi = std::min(n, lo + cfg.batch_size);
            int bs = hi - lo;

            for (TensorRef& t : gr) std::fill(t.data, t.data + t.size, 0.0);
            double batch_total = 0, batch_sft = 0, batch_focus = 0;
            for (int i = lo; i < hi; ++i) {
                int idx = order[static_cast<std::size_t>(i)];
                const FocusSpec* sp = nullptr;
                if (focus != nullptr) {
                    spec.prior = (*priors)[static_cast<std::size_t>(idx)];
                    sp = &spec;
                }
                LossBreakdown lb =
                    backward(model, data[static_cast<std::size_t>(idx)], sp, grads);
                batch_total += lb.total;
                batch_sft += lb.sft;
                batch_focus += lb.focus;
            }
            double inv_bs = 1.0 / bs;
            batch_total *= inv_bs;
            batch_sft *= inv_bs;
            batch_focus *= inv_bs;
            check_numeric(std::isfinite(batch_total),
                          "non-finite loss at step " + std::to_string(step));

            double sq = 0;
            for (TensorRef& t : gr)
                for (std::size_t j = 0; j < t.size; ++j) {
                    t.data[j] *= inv_bs;
                    sq += t.data[j] * t.data[j];
                }
            double gnorm = std::sqrt(sq);
            check_numeric(std::isfinite(gnorm),
                          "non-finite gradient at step " + std::to_string(step));
            double clip = cfg.clip_norm > 0 && gnorm > cfg.clip_norm
                              ? cfg.clip_norm / gnorm
                              : 1.0;

            double lr_t = schedule_lr(cfg, step, total_steps);
            double bc1 = 1.0 - std::pow(cfg.beta1, step + 1);
            double bc2 = 1.0 - std::pow(cfg.beta2, step + 1);
            for (std::size_t t = 0; t < pr.size(); ++t) {
                double* p = pr[t].data;
                double* g = gr[t].data;
                double* ma = m1r[t].data;
                double* va = m2r[t].data;
                bool decay = pr[t].dims.size() >= 2;
                for (std::size_t j = 0; j < pr[t].size; ++j) {
                    double gj = g[j] * clip;
                    ma[j] = cfg.beta1 * ma[j] + (1.0 - cfg.beta1) * gj;
                    va[j] = cfg.beta2 * va[j] + (1.0 - cfg.beta2) * gj * gj;
                    double update =
                        (ma[j] / bc1) / (std::sqrt(va[j] / bc2) + cfg.adam_eps);
                    if (decay) update += cfg.weight_decay * p[j];
                    p[j] -= lr_t * update;
                }
            }

            ep_total += batch_total;
            ep_sft += batch_sft;
            ep_focus += batch_focus;
            ++step;
            if (cfg.log_every > 0 && step % cfg.log_every == 0)
                std::fprintf(stderr, "step %d/%d loss %.4f\n", step, total_steps,
                             batch_total);
        }

        stats.epoch_loss.push_back(ep_total / steps_per_epoch);
        stats.epoch_sft.push_back(ep_sft / steps_per_epoch);
        stats.epoch_focus.push_back(ep_focus / steps_per_epoch);
        if (cfg.on_epoch) cfg.on_epoch(epoch, model);
    }
    stats.steps = step;
    return stats;
}

}  // namespace countlab
