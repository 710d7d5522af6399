#include <cmath>

#include "countlab/common.hpp"
#include "countlab/focus.hpp"
#include "countlab/forward.hpp"
#include "countlab/temperature.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace countlab;

namespace {

std::map<std::pair<int, int>, double> ones_for_layer(const ModelConfig& cfg,
                                                     int layer) {
    std::map<std::pair<int, int>, double> g;
    for (int h = 0; h < cfg.n_heads; ++h) g[{layer, h}] = 1.0;
    return g;
}

}  // namespace

TEST_CASE("unit temperature reproduces the forward pass bitwise") {
    MicroLab lab = micro_lab(51);
    TokenSequence seq = count_prompt(gen_syndot(lab.spec, 2, 2, 14), lab.vocab);

    TemperatureConfig cfg;
    cfg.alpha = 1.0;
    for (int l = 0; l < lab.cfg.n_layers; ++l)
        for (int h = 0; h < lab.cfg.n_heads; ++h) cfg.head_gammas[{l, h}] = 1.0;
    OverrideSet ov = apply_temperature(cfg);
    for (const auto& [key, beta] : ov.beta) CHECK(beta == 1.0);

    ActivationTrace base = forward(lab.params, seq);
    ActivationTrace tuned = forward(lab.params, seq, ov);
    CHECK((base.logits - tuned.logits).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("gamma normalization clamps negatives and centers the mean") {
    TemperatureConfig cfg;
    cfg.alpha = 2.0;
    cfg.head_gammas = {{{0, 0}, -1.0}, {{0, 1}, 1.0}, {{1, 0}, 1.0}, {{1, 1}, 1.0}};
    OverrideSet ov = apply_temperature(cfg);  // warns about the clamp on stderr
    CHECK(ov.beta.at({0, 0}) == 0.0);
    CHECK(std::fabs(ov.beta.at({0, 1}) - 2.0 * 4.0 / 3.0) < 1e-12);

    TemperatureConfig raw = cfg;
    raw.head_gammas[{0, 0}] = 0.5;
    raw.normalize_gamma = false;
    OverrideSet ov2 = apply_temperature(raw);
    CHECK(ov2.beta.at({0, 0}) == 2.0 * 0.5);
    CHECK(ov2.beta.at({1, 1}) == 2.0);

    TemperatureConfig dead = cfg;
    dead.head_gammas = {{{0, 0}, -1.0}, {{0, 1}, 0.0}};
    CHECK_THROWS_AS(apply_temperature(dead), ConfigError);
}

TEST_CASE("raising alpha sharpens every targeted attention row") {
    MicroLab lab = micro_lab(53);
    std::vector<std::pair<int, int>> heads;
    // one layer at a time: the layer's input is then identical across alphas,
    // so each row's logits scale in place and its entropy cannot rise
    for (int layer = 0; layer < lab.cfg.n_layers; ++layer) {
        heads.clear();
        for (int h = 0; h < lab.cfg.n_heads; ++h) heads.push_back({layer, h});
        for (std::uint64_t s = 0; s < 5; ++s) {
            TokenSequence seq =
                count_prompt(gen_syndot(lab.spec, 1 + s % 3, 2, 900 + s), lab.vocab);
            std::vector<double> prev;
            for (double alpha : {1.0, 1.1, 1.2, 1.3}) {
                TemperatureConfig cfg;
                cfg.alpha = alpha;
                cfg.head_gammas = ones_for_layer(lab.cfg, layer);
                std::vector<double> h =
                    attention_row_entropies(lab.params, seq,
                                            apply_temperature(cfg), heads);
                REQUIRE(h.size() ==
                        heads.size() * static_cast<std::size_t>(seq.length()));
                if (!prev.empty())
                    for (std::size_t i = 0; i < h.size(); ++i)
                        CHECK(h[i] <= prev[i] + 1e-12);
                prev = h;
            }
        }
    }
}

TEST_CASE("override fragments merge only when disjoint") {
    OverrideSet a, b;
    a.beta[{0, 0}] = 1.5;
    a.resid[1][3] = Eigen::VectorXd::Zero(4);
    b.beta[{0, 1}] = 2.0;
    b.out_scale[{1, 0}] = 1.1;
    OverrideSet m = merge_overrides(a, b);
    CHECK(m.beta.size() == 2);
    CHECK(m.resid.size() == 1);
    CHECK(m.out_scale.size() == 1);

    OverrideSet clash;
    clash.beta[{0, 0}] = 9.0;
    CHECK_THROWS_AS(merge_overrides(a, clash), ContractError);

    OverrideSet resid_clash;
    resid_clash.resid[1][3] = Eigen::VectorXd::Ones(4);
    CHECK_THROWS_AS(merge_overrides(a, resid_clash), ContractError);
}

TEST_CASE("zero reweight changes nothing and eta scales contributions") {
    MicroLab lab = micro_lab(55);
    TokenSequence seq = count_prompt(gen_syndot(lab.spec, 1, 2, 15), lab.vocab);

    ReweightConfig cfg;
    cfg.eta = 0.0;
    for (int h = 0; h < lab.cfg.n_heads; ++h) cfg.head_gammas[{0, h}] = 2.0;
    OverrideSet ov = apply_reweight(cfg);
    for (const auto& [key, s] : ov.out_scale) CHECK(s == 1.0);
    ActivationTrace base = forward(lab.params, seq);
    ActivationTrace same = forward(lab.params, seq, ov);
    CHECK((base.logits - same.logits).cwiseAbs().maxCoeff() == 0.0);

    cfg.eta = 0.5;
    cfg.head_gammas = {{{0, 0}, 1.0}};
    OverrideSet scaled = apply_reweight(cfg);
    CHECK(scaled.out_scale.at({0, 0}) == 1.5);
    ActivationTrace moved = forward(lab.params, seq, scaled);
    CHECK((base.logits - moved.logits).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("focus layer selection counts grounding and routing heads") {
    auto head = [](int layer, const char* cat) {
        HeadReport r;
        r.layer = layer;
        r.category = cat;
        return r;
    };
    std::vector<HeadReport> reports = {
        head(0, "VisualGrounding"), head(0, "VisualGrounding"),
        head(1, "CrossModalRouting"), head(3, "CrossModalRouting"),
        head(3, "VisualGrounding"), head(3, "CrossModalRouting"),
        head(2, "CountingAggregation"), head(2, "Awareness"),
    };
    CHECK(select_focus_layers(reports, 4, 2) == std::vector<int>{1, 4});
    CHECK(select_focus_layers(reports, 4, 1) == std::vector<int>{4});
    // ties prefer the earlier layer
    std::vector<HeadReport> tied = {head(0, "VisualGrounding"),
                                    head(2, "VisualGrounding")};
    CHECK(select_focus_layers(tied, 4, 1) == std::vector<int>{1});
    CHECK_THROWS_AS(select_focus_layers(reports, 4, 5), ConfigError);
}

TEST_CASE("focus layer lists resolve to validated block indices") {
    FocusConfig fc;
    fc.layers = {1, 3};
    CHECK(resolve_focus_blocks(fc, 4) == std::vector<int>{0, 2});
    fc.layers = {};
    CHECK(resolve_focus_blocks(fc, 3) == std::vector<int>{0, 1, 2});
    fc.layers = {0};
    CHECK_THROWS_AS(resolve_focus_blocks(fc, 4), ConfigError);
    fc.layers = {5};
    CHECK_THROWS_AS(resolve_focus_blocks(fc, 4), ConfigError);
    fc.layers = {2, 2};
    CHECK_THROWS_AS(resolve_focus_blocks(fc, 4), ConfigError);
}

TEST_CASE("a perfectly focused row pays exactly the prior's entropy") {
    const int n = 10, first_image = 2, n_img = 4;
    Eigen::VectorXd g(n_img);
    g << 0.4, 0.3, 0.2, 0.1;
    std::vector<int> queries = {7, 9};
    const double eps = 1e-8;

    std::vector<Eigen::MatrixXd> attn(2, Eigen::MatrixXd::Zero(n, n));
    for (Eigen::MatrixXd& a : attn)
        for (int q : queries) {
            a(q, 0) = 0.5;  // mass off the image does not matter
            for (int j = 0; j < n_img; ++j) a(q, first_image + j) = 0.5 * g(j);
        }

    double expect = 0;
    for (int j = 0; j < n_img; ++j) expect -= g(j) * std::log(g(j) + eps);
    double term = focus_layer_term(attn, g, queries, first_image, n_img, eps);
    CHECK(std::fabs(term - 2 * expect) < 1e-9);

    // any other image profile pays strictly more (Gibbs)
    std::vector<Eigen::MatrixXd> off(2, Eigen::MatrixXd::Zero(n, n));
    for (Eigen::MatrixXd& a : off)
        for (int q : queries) {
            for (int j = 0; j < n_img; ++j) a(q, first_image + j) = 0.25 * g(3 - j);
        }
    double worse = focus_layer_term(off, g, queries, first_image, n_img, eps);
    CHECK(worse > term + 1e-3);
}

TEST_CASE("focus attention gradients match finite differences") {
    const int n = 8, first_image = 1, n_img = 4;
    Eigen::VectorXd g(n_img);
    g << 0.1, 0.2, 0.3, 0.4;
    std::vector<int> queries = {6, 7};
    const double eps = 1e-8;

    Rng rng(17);
    std::vector<Eigen::MatrixXd> attn(2);
    for (Eigen::MatrixXd& a : attn) {
        a.resize(n, n);
        for (int i = 0; i < n * n; ++i) a.data()[i] = 0.05 + 0.9 * rng.real();
    }

    std::vector<Eigen::MatrixXd> d_attn(2, Eigen::MatrixXd::Zero(n, n));
    focus_layer_term(attn, g, queries, first_image, n_img, eps, &d_attn, 1.0);

    const double h = 1e-6;
    const std::vector<std::pair<int, int>> probes = {
        {6, 1}, {6, 3}, {7, 4}, {7, 0}, {3, 2}};
    for (int head = 0; head < 2; ++head) {
        for (auto [r, c] : probes) {
            double orig = attn[static_cast<std::size_t>(head)](r, c);
            attn[static_cast<std::size_t>(head)](r, c) = orig + h;
            double up = focus_layer_term(attn, g, queries, first_image, n_img, eps);
            attn[static_cast<std::size_t>(head)](r, c) = orig - h;
            double down = focus_layer_term(attn, g, queries, first_image, n_img, eps);
            attn[static_cast<std::size_t>(head)](r, c) = orig;
            double fd = (up - down) / (2 * h);
            double an = d_attn[static_cast<std::size_t>(head)](r, c);
            CHECK(std::fabs(an - fd) <= 1e-6 * std::max(1.0, std::fabs(fd)));
        }
    }
    // rows outside the query set and columns outside the image carry no gradient
    CHECK(d_attn[0](3, 2) == 0.0);
    CHECK(d_attn[0](6, 0) == 0.0);

    // grad_scale multiplies the accumulated gradient linearly
    std::vector<Eigen::MatrixXd> twice(2, Eigen::MatrixXd::Zero(n, n));
    focus_layer_term(attn, g, queries, first_image, n_img, eps, &twice, 2.0);
    for (int head = 0; head < 2; ++head)
        CHECK((twice[static_cast<std::size_t>(head)] -
               2.0 * d_attn[static_cast<std::size_t>(head)])
                  .cwiseAbs()
                  .maxCoeff() < 1e-12);
}

TEST_CASE("focus queries start at the image end and can include the image") {
    MicroLab lab = micro_lab(57);
    TokenSequence seq = count_prompt(gen_syndot(lab.spec, 1, 2, 16), lab.vocab);
    std::vector<int> qs = focus_query_positions(seq, false);
    REQUIRE_FALSE(qs.empty());
    CHECK(qs.front() == seq.last_image_pos);
    CHECK(qs.back() == seq.length() - 1);
    CHECK(static_cast<int>(qs.size()) == seq.length() - seq.last_image_pos);

    std::vector<int> with_img = focus_query_positions(seq, true);
    CHECK(with_img.size() == qs.size() + static_cast<std::size_t>(seq.n_image_tokens()));
    CHECK(with_img.front() == seq.first_image_pos);
}
