#include <algorithm>
#include <cmath>

#include "countlab/backward.hpp"
#include "countlab/focus.hpp"
#include "countlab/forward.hpp"
#include "countlab/model.hpp"
#include "countlab/scene.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace countlab;

namespace {

double total_loss(const Params& p, const TokenSequence& seq,
                  const Eigen::VectorXd& prior, const FocusConfig& fc) {
    CaptureFlags cap;
    cap.attention = true;
    ActivationTrace tr = forward(p, seq, {}, cap);
    double loss = loss_sft_from_logits(tr.logits, seq.answer_targets);
    if (fc.lambda != 0) loss += fc.lambda * focus_loss(tr, seq, prior, fc);
    return loss;
}

}  // namespace

TEST_CASE("analytic gradients match central finite differences") {
    MicroLab lab = micro_lab(3);
    RenderedScene scene = gen_syndot(lab.spec, 2, 2, 6);
    TokenSequence seq = count_prompt(scene, lab.vocab, true);

    FocusConfig fc;
    fc.lambda = 0.7;
    FocusSpec spec{fc, focus_prior(scene, 1.0)};

    Params grads = zero_like(lab.params);
    LossBreakdown bd = backward(lab.params, seq, &spec, grads);
    CHECK(std::fabs(bd.total - total_loss(lab.params, seq, spec.prior, fc)) < 1e-12);
    CHECK(std::fabs(bd.total - (bd.sft + fc.lambda * bd.focus)) < 1e-12);

    const double h = 1e-5;
    auto grefs = tensor_refs(grads);
    Params work = lab.params;
    auto wrefs = tensor_refs(work);
    for (std::size_t t = 0; t < wrefs.size(); ++t) {
        std::size_t size = wrefs[t].size;
        std::size_t samples = std::min<std::size_t>(size, 6);
        for (std::size_t k = 0; k < samples; ++k) {
            std::size_t j = k * size / samples;
            double orig = wrefs[t].data[j];
            wrefs[t].data[j] = orig + h;
            double up = total_loss(work, seq, spec.prior, fc);
            wrefs[t].data[j] = orig - h;
            double down = total_loss(work, seq, spec.prior, fc);
            wrefs[t].data[j] = orig;
            double fd = (up - down) / (2 * h);
            double an = grefs[t].data[j];
            double rel = std::fabs(an - fd) /
                         std::max({std::fabs(an), std::fabs(fd), 1e-6});
            INFO(wrefs[t].name, "[", j, "] analytic ", an, " fd ", fd);
            CHECK(rel < 1e-4);
        }
    }
}

TEST_CASE("a residual override cuts gradients above the patched level") {
    MicroLab lab = micro_lab(5);
    TokenSequence seq = count_prompt(gen_syndot(lab.spec, 3, 2, 8), lab.vocab, true);

    CaptureFlags cap;
    cap.residuals = true;
    ActivationTrace tr = forward(lab.params, seq, {}, cap);
    OverrideSet ov;
    for (int t = 0; t < seq.length(); ++t)
        ov.resid[1][t] = tr.resid[1].row(t).transpose();

    Params base = zero_like(lab.params), cut = zero_like(lab.params);
    backward(lab.params, seq, nullptr, base);
    backward(lab.params, seq, nullptr, cut, ov);

    // upstream of the override: exactly zero
    CHECK(cut.tok_embed.cwiseAbs().maxCoeff() == 0.0);
    CHECK(cut.pos_embed.cwiseAbs().maxCoeff() == 0.0);
    CHECK(cut.patch_embed.cwiseAbs().maxCoeff() == 0.0);
    CHECK(cut.layers[0].wq.cwiseAbs().maxCoeff() == 0.0);
    CHECK(cut.layers[0].w2.cwiseAbs().maxCoeff() == 0.0);
    CHECK(cut.layers[0].ln1_g.cwiseAbs().maxCoeff() == 0.0);

    // downstream: identical to the unpatched run (the override wrote the
    // values the stream already had)
    CHECK((cut.layers[1].wq - base.layers[1].wq).cwiseAbs().maxCoeff() == 0.0);
    CHECK((cut.layers[1].w1 - base.layers[1].w1).cwiseAbs().maxCoeff() == 0.0);
    CHECK((cut.unembed - base.unembed).cwiseAbs().maxCoeff() == 0.0);
    CHECK((cut.final_g - base.final_g).cwiseAbs().maxCoeff() == 0.0);
    CHECK(base.layers[1].wq.cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("a head output override cuts that head's query, key, value gradients") {
    MicroLab lab = micro_lab(7);
    TokenSequence seq = count_prompt(gen_syndot(lab.spec, 1, 2, 9), lab.vocab, true);
    int dh = lab.cfg.d_head();

    CaptureFlags cap;
    cap.head_outputs = true;
    ActivationTrace tr = forward(lab.params, seq, {}, cap);
    OverrideSet ov;
    ov.head_out[{1, 0}] = tr.head_out[1][0];

    Params grads = zero_like(lab.params);
    backward(lab.params, seq, nullptr, grads, ov);

    CHECK(grads.layers[1].wq.middleCols(0, dh).cwiseAbs().maxCoeff() == 0.0);
    CHECK(grads.layers[1].wk.middleCols(0, dh).cwiseAbs().maxCoeff() == 0.0);
    CHECK(grads.layers[1].wv.middleCols(0, dh).cwiseAbs().maxCoeff() == 0.0);
    // the other head still learns, and W_O sits below the override
    CHECK(grads.layers[1].wq.middleCols(dh, dh).cwiseAbs().maxCoeff() > 0.0);
    CHECK(grads.layers[1].wo.topRows(dh).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("zero focus weight reproduces the plain answer gradients bitwise") {
    MicroLab lab = micro_lab(9);
    RenderedScene scene = gen_syndot(lab.spec, 2, 2, 11);
    TokenSequence seq = count_prompt(scene, lab.vocab, true);

    FocusConfig fc;
    fc.lambda = 0.0;
    FocusSpec spec{fc, focus_prior(scene, 1.0)};

    Params ga = zero_like(lab.params), gb = zero_like(lab.params);
    LossBreakdown with = backward(lab.params, seq, &spec, ga);
    LossBreakdown without = backward(lab.params, seq, nullptr, gb);

    CHECK(with.total == without.total);
    CHECK(with.focus == 0.0);
    auto ra = tensor_refs(ga), rb = tensor_refs(gb);
    for (std::size_t i = 0; i < ra.size(); ++i)
        for (std::size_t j = 0; j < ra[i].size; ++j)
            REQUIRE(ra[i].data[j] == rb[i].data[j]);
}
