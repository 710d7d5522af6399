#include "countlab/temperature.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "countlab/common.hpp"
#include "countlab/forward.hpp"

namespace countlab {

namespace {

// Clamp negatives to zero, then scale so the mean over targets is 1.
std::map<std::pair<int, int>, double> normalized_gammas(
    const std::map<std::pair<int, int>, double>& raw, bool normalize) {
    check_config(!raw.empty(), "no target heads given");
    std::map<std::pair<int, int>, double> out;
    double sum = 0;
    for (const auto& [key, g] : raw) {
        double v = g;
        if (v < 0) {
            std::fprintf(stderr, "warning: negative importance for L%dH%d clamped to 0\n",
                         key.first + 1, key.second + 1);
            v = 0;
        }
        out[key] = v;
        sum += v;
    }
    if (!normalize) return out;
    check_config(sum > 0, "all head importances are zero");
    double scale = static_cast<double>(out.size()) / sum;
    for (auto& [key, v] : out) v *= scale;
    return out;
}

}  // namespace

OverrideSet apply_temperature(const TemperatureConfig& cfg) {
    check_config(cfg.alpha >= 0, "alpha must be non-negative");
    OverrideSet ov;
    for (const auto& [key, g] :
         normalized_gammas(cfg.head_gammas, cfg.normalize_gamma))
        ov.beta[key] = cfg.alpha * g;
    return ov;
}

OverrideSet apply_reweight(const ReweightConfig& cfg) {
    OverrideSet ov;
    for (const auto& [key, g] :
         normalized_gammas(cfg.head_gammas, cfg.normalize_gamma)) {
        double scale = 1.0 + cfg.eta * g;
        check_config(scale >= 0, "reweight multiplier went negative");
        ov.out_scale[key] = scale;
    }
    return ov;
}

OverrideSet merge_overrides(const OverrideSet& a, const OverrideSet& b) {
    OverrideSet out = a;
    for (const auto& [level, rows] : b.resid)
        for (const auto& [token, value] : rows) {
            check_contract(out.resid[level].emplace(token, value).second,
                           "residual override collision");
        }
    for (const auto& [key, value] : b.head_out)
        check_contract(out.head_out.emplace(key, value).second,
                       "head output override collision");
    for (const auto& [key, value] : b.beta)
        check_contract(out.beta.emplace(key, value).second,
                       "beta override collision");
    for (const auto& [key, value] : b.out_scale)
        check_contract(out.out_scale.emplace(key, value).second,
                       "out-scale override collision");
    return out;
}

std::vector<int> select_focus_layers(const std::vector<HeadReport>& reports,
                                     int n_layers, int k) {
    check_config(k >= 1 && k <= n_layers, "bad focus layer count");
    std::vector<int> count(static_cast<std::size_t>(n_layers), 0);
    for (const HeadReport& r : reports)
        if (r.category == "VisualGrounding" || r.category == "CrossModalRouting")
            ++count[static_cast<std::size_t>(r.layer)];
    std::vector<int> layers(static_cast<std::size_t>(n_layers));
    std::iota(layers.begin(), layers.end(), 0);
    std::stable_sort(layers.begin(), layers.end(), [&](int a, int b) {
        return count[static_cast<std::size_t>(a)] > count[static_cast<std::size_t>(b)];
    });
    layers.resize(static_cast<std::size_t>(k));
    std::sort(layers.begin(), layers.end());
    for (int& l : layers) ++l;  // 1-based
    return layers;
}

std::vector<double> attention_row_entropies(
    const Params& params, const TokenSequence& seq, const OverrideSet& ov,
    const std::vector<std::pair<int, int>>& heads) {
    CaptureFlags flags;
    flags.attention = true;
    ActivationTrace tr = forward(params, seq, ov, flags);
    std::vector<double> out;
    for (auto [l, h] : heads) {
        const Eigen::MatrixXd& a =
            tr.attn[static_cast<std::size_t>(l)][static_cast<std::size_t>(h)];
        for (int i = 0; i < a.rows(); ++i) {
            double ent = 0;
            for (int j = 0; j <= i; ++j)
                if (a(i, j) > 0) ent -= a(i, j) * std::log(a(i, j));
            out.push_back(ent);
        }
    }
    return out;
}

}  // namespace countlab
