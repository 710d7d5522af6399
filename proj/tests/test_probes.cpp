#include <cmath>

#include "countlab/common.hpp"
#include "countlab/probes.hpp"
#include "doctest.h"
#include "oracle.hpp"
#include "test_util.hpp"

using namespace countlab;

namespace {

// Micro-width model over the full 8x8 patch grid, so objects can span
// several patches.
struct WideLab {
    Vocab vocab = Vocab::standard(9);
    CanvasSpec spec{64, 8};
    ModelConfig cfg;
    Params params;
};

WideLab wide_lab(std::uint64_t seed) {
    WideLab lab;
    lab.cfg = ModelConfig::toy(lab.vocab, lab.spec);
    lab.cfg.n_layers = 2;
    lab.cfg.n_heads = 2;
    lab.cfg.d_model = 16;
    lab.cfg.mlp_mult = 2;
    lab.params = init_params(lab.cfg, seed);
    return lab;
}

}  // namespace

TEST_CASE("roc auc orders scores with mid-rank ties") {
    CHECK(roc_auc({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}) == 1.0);
    CHECK(roc_auc({0.1, 0.2, 0.8, 0.9}, {1, 1, 0, 0}) == 0.0);
    CHECK(roc_auc({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0}) == 0.5);
    CHECK(std::fabs(roc_auc({1.0, 0.5, 0.5, 0.0}, {1, 0, 1, 0}) - 0.875) < 1e-12);
    CHECK(std::fabs(roc_auc({0.3, 0.7}, {0, 1}) - 1.0) < 1e-12);
    CHECK_THROWS_AS(roc_auc({0.1, 0.2}, {1, 1}), DataError);
    CHECK_THROWS_AS(roc_auc({0.1}, {0}), DataError);
}

TEST_CASE("patch ownership labels resolve contested patches to background") {
    CanvasSpec spec{64, 8};
    RenderedScene s;
    s.kind = SceneKind::SynDot;
    s.spec = spec;
    ObjectAttr a;
    a.cx = 12;
    a.cy = 4;
    a.radius = 5;
    ObjectAttr b = a;
    b.cx = 20;
    s.objects = {a, b};

    std::vector<int> labels = patch_object_labels(s);
    REQUIRE(static_cast<int>(labels.size()) == spec.patches());

    Image ma = instance_mask(spec, a), mb = instance_mask(spec, b);
    bool saw_a = false, saw_b = false, saw_contested = false;
    for (int p = 0; p < spec.patches(); ++p) {
        bool in_a = oracle::mask_pixels_in_patch(ma, spec.patch_px, p) >= 1;
        bool in_b = oracle::mask_pixels_in_patch(mb, spec.patch_px, p) >= 1;
        int expect = -1;
        if (in_a && !in_b) expect = 0;
        if (in_b && !in_a) expect = 1;
        CHECK(labels[static_cast<std::size_t>(p)] == expect);
        saw_a |= expect == 0;
        saw_b |= expect == 1;
        saw_contested |= in_a && in_b;
    }
    CHECK(saw_a);
    CHECK(saw_b);
    CHECK(saw_contested);
}

TEST_CASE("the binding probe returns sane, deterministic level curves") {
    WideLab lab = wide_lab(63);
    std::vector<BindingScene> scenes;
    for (int i = 0; i < 15; ++i) {
        RenderedScene s = gen_syndot(lab.spec, 2 + i % 2, 5, 1000 + i, 2);
        BindingScene bs;
        bs.seq = count_prompt(s, lab.vocab);
        bs.patch_object = patch_object_labels(s);
        scenes.push_back(std::move(bs));
    }
    BindingConfig cfg;
    cfg.epochs = 3;
    BindingResult r1 = binding_probe(lab.params, scenes, cfg);
    REQUIRE(r1.auc.size() == static_cast<std::size_t>(lab.cfg.n_layers) + 1);
    REQUIRE(r1.auc_shuffled.size() == r1.auc.size());
    for (std::size_t l = 0; l < r1.auc.size(); ++l) {
        CHECK(r1.auc[l] >= 0.0);
        CHECK(r1.auc[l] <= 1.0);
        CHECK(r1.auc_shuffled[l] >= 0.0);
        CHECK(r1.auc_shuffled[l] <= 1.0);
    }
    CHECK(r1.best_level >= 0);
    CHECK(r1.best_level <= lab.cfg.n_layers);

    BindingResult r2 = binding_probe(lab.params, scenes, cfg);
    CHECK(r1.auc == r2.auc);
    CHECK(r1.auc_shuffled == r2.auc_shuffled);
    CHECK(r1.best_level == r2.best_level);
}

TEST_CASE("the numerosity probe reports per-level held-out accuracy") {
    WideLab lab = wide_lab(65);
    std::vector<NumerosityScene> scenes;
    for (int i = 0; i < 18; ++i) {
        RenderedScene s = gen_syndot(lab.spec, 1 + i % 3, 5, 1100 + i, 2);
        NumerosityScene ns;
        ns.seq = count_prompt(s, lab.vocab);
        ns.object_patches = scene_object_patches(s);
        ns.count = s.count();
        scenes.push_back(std::move(ns));
    }
    NumerosityConfig cfg;
    cfg.epochs = 10;
    NumerosityResult r = numerosity_probe(lab.params, scenes, cfg);
    REQUIRE(r.accuracy.size() == static_cast<std::size_t>(lab.cfg.n_layers) + 1);
    for (double a : r.accuracy) {
        CHECK(a >= 0.0);
        CHECK(a <= 1.0);
    }

    // a single count class has nothing to classify
    std::vector<NumerosityScene> flat(scenes.begin(), scenes.begin() + 3);
    for (auto& ns : flat) ns.count = 2;
    CHECK_THROWS_AS(numerosity_probe(lab.params, flat, cfg), DataError);
}

TEST_CASE("per-head probes decode every head with a finite mismatch") {
    WideLab lab = wide_lab(67);
    std::vector<ScoredScene> corpus;
    for (int i = 0; i < 8; ++i) {
        RenderedScene s = gen_syndot(lab.spec, 1 + i % 3, 5, 1200 + i, 2);
        ScoredScene sc;
        sc.seq = count_prompt(s, lab.vocab);
        sc.gt_token = lab.vocab.digit(s.count());
        sc.object_patches = scene_object_patches(s);
        corpus.push_back(std::move(sc));
    }
    AttnLensConfig cfg;
    cfg.epochs = 2;
    Lexicons lex = Lexicons::standard(lab.vocab);
    AttnLensResult r = attnlens_probes(lab.params, corpus, lex, lab.vocab, cfg);
    REQUIRE(r.kl.rows() == lab.cfg.n_layers);
    REQUIRE(r.kl.cols() == lab.cfg.n_heads);
    REQUIRE(r.vgs.rows() == lab.cfg.n_layers);
    for (int l = 0; l < r.kl.rows(); ++l)
        for (int h = 0; h < r.kl.cols(); ++h) {
            CHECK(std::isfinite(r.kl(l, h)));
            CHECK(r.kl(l, h) >= -1e-9);
            CHECK(r.vgs(l, h) >= 0.0);
            CHECK(r.vgs(l, h) <= 1.0);
        }
    CHECK(r.vgs_best_mean_ratio >= 1.0 - 1e-12);
}
