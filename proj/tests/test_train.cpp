#include <cmath>
#include <limits>

#include "countlab/common.hpp"
#include "countlab/train.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace countlab;

namespace {

std::vector<TokenSequence> micro_batch(const MicroLab& lab, int n) {
    std::vector<TokenSequence> data;
    for (int i = 0; i < n; ++i) {
        RenderedScene s = gen_syndot(lab.spec, 1 + i % 3, 2, 100 + i);
        data.push_back(count_prompt(s, lab.vocab, true));
    }
    return data;
}

bool params_equal(Params& a, Params& b) {
    auto ra = tensor_refs(a), rb = tensor_refs(b);
    for (std::size_t i = 0; i < ra.size(); ++i)
        for (std::size_t j = 0; j < ra[i].size; ++j)
            if (ra[i].data[j] != rb[i].data[j]) return false;
    return true;
}

}  // namespace

TEST_CASE("training lowers the loss and is bit-deterministic") {
    MicroLab lab = micro_lab(21);
    auto data = micro_batch(lab, 18);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 6;
    cfg.lr = 1e-2;
    cfg.seed = 4;

    Params run1 = lab.params;
    TrainStats s1 = train(run1, data, nullptr, nullptr, cfg);
    CHECK(s1.steps == 6);
    REQUIRE(s1.epoch_loss.size() == 2);
    CHECK(s1.epoch_loss[1] < s1.epoch_loss[0]);
    CHECK(std::isfinite(s1.epoch_loss[1]));

    Params run2 = lab.params;
    TrainStats s2 = train(run2, data, nullptr, nullptr, cfg);
    CHECK(params_equal(run1, run2));
    CHECK(s1.epoch_loss == s2.epoch_loss);
}

TEST_CASE("zero focus weight trains bitwise like the plain objective") {
    MicroLab lab = micro_lab(23);
    std::vector<TokenSequence> data;
    std::vector<Eigen::VectorXd> priors;
    for (int i = 0; i < 12; ++i) {
        RenderedScene s = gen_syndot(lab.spec, 1 + i % 3, 2, 200 + i);
        data.push_back(count_prompt(s, lab.vocab, true));
        priors.push_back(focus_prior(s, 1.0));
    }
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 4;
    cfg.seed = 9;

    FocusConfig fc;
    fc.lambda = 0.0;
    Params with = lab.params, without = lab.params;
    TrainStats sw = train(with, data, &priors, &fc, cfg);
    TrainStats so = train(without, data, nullptr, nullptr, cfg);
    CHECK(params_equal(with, without));
    CHECK(sw.epoch_loss == so.epoch_loss);
    for (double f : sw.epoch_focus) CHECK(f == 0.0);
}

TEST_CASE("the focus term is finite and reported when enabled") {
    MicroLab lab = micro_lab(25);
    std::vector<TokenSequence> data;
    std::vector<Eigen::VectorXd> priors;
    for (int i = 0; i < 8; ++i) {
        RenderedScene s = gen_syndot(lab.spec, 1 + i % 2, 2, 300 + i);
        data.push_back(count_prompt(s, lab.vocab, true));
        priors.push_back(focus_prior(s, 1.0));
    }
    FocusConfig fc;
    fc.lambda = 0.5;
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 4;

    Params p = lab.params;
    TrainStats st = train(p, data, &priors, &fc, cfg);
    REQUIRE(st.epoch_focus.size() == 1);
    CHECK(st.epoch_focus[0] > 0.0);
    CHECK(std::isfinite(st.epoch_focus[0]));
    CHECK(std::fabs(st.epoch_loss[0] -
                    (st.epoch_sft[0] + fc.lambda * st.epoch_focus[0])) < 1e-9);
}

TEST_CASE("weight decay touches matrices but not gains") {
    MicroLab lab = micro_lab(27);
    auto data = micro_batch(lab, 8);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 8;  // exactly one optimizer step
    cfg.seed = 2;

    Params none = lab.params, heavy = lab.params;
    cfg.weight_decay = 0.0;
    train(none, data, nullptr, nullptr, cfg);
    cfg.weight_decay = 0.5;
    train(heavy, data, nullptr, nullptr, cfg);

    auto rn = tensor_refs(none), rh = tensor_refs(heavy);
    for (std::size_t i = 0; i < rn.size(); ++i) {
        bool same = true;
        for (std::size_t j = 0; j < rn[i].size; ++j)
            same &= rn[i].data[j] == rh[i].data[j];
        if (rn[i].dims.size() < 2) {
            CHECK(same);  // gains and biases escape the decay
        } else {
            CHECK_FALSE(same);
        }
    }
}

TEST_CASE("a poisoned parameter aborts training with a numeric error") {
    MicroLab lab = micro_lab(29);
    auto data = micro_batch(lab, 4);
    lab.params.tok_embed(0, 0) = std::numeric_limits<double>::quiet_NaN();
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 4;
    CHECK_THROWS_AS(train(lab.params, data, nullptr, nullptr, cfg), NumericError);
}
