#include "countlab/common.hpp"
#include "countlab/yesband.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace countlab;

TEST_CASE("band statistics read pure response vectors") {
    std::vector<int> ks = {1, 2, 3, 4, 5, 6, 7, 8, 9};

    YesBandResult ideal = band_stats(4, ks, {0, 0, 0, 1, 0, 0, 0, 0, 0});
    CHECK(ideal.band_lo == 4);
    CHECK(ideal.band_hi == 4);
    CHECK(ideal.band_width == 1);
    CHECK(ideal.oscillations == 2);

    YesBandResult all_yes = band_stats(4, ks, {1, 1, 1, 1, 1, 1, 1, 1, 1});
    CHECK(all_yes.band_lo == 1);
    CHECK(all_yes.band_hi == 9);
    CHECK(all_yes.band_width == 9);
    CHECK(all_yes.oscillations == 0);

    YesBandResult wide = band_stats(4, ks, {0, 1, 1, 1, 1, 0, 0, 0, 0});
    CHECK(wide.band_lo == 2);
    CHECK(wide.band_hi == 5);
    CHECK(wide.band_width == 4);
    CHECK(wide.oscillations == 2);

    // no yes at the true count: no band, even with yes elsewhere
    YesBandResult miss = band_stats(4, ks, {1, 1, 0, 0, 0, 0, 0, 0, 1});
    CHECK(miss.band_width == 0);
    CHECK(miss.band_lo == -1);
    CHECK(miss.band_hi == -1);
    CHECK(miss.oscillations == 2);

    YesBandResult flicker = band_stats(3, ks, {1, 0, 1, 0, 1, 0, 1, 0, 1});
    CHECK(flicker.oscillations == 8);
    CHECK(flicker.band_width == 1);
    CHECK(flicker.band_lo == 3);

    // edge-of-range band
    YesBandResult edge = band_stats(9, ks, {0, 0, 0, 0, 0, 0, 0, 1, 1});
    CHECK(edge.band_lo == 8);
    CHECK(edge.band_hi == 9);
    CHECK(edge.band_width == 2);

    CHECK_THROWS_AS(band_stats(4, ks, {1, 0}), ContractError);
}

TEST_CASE("probing a model sweeps the verify question over k") {
    MicroLab lab = micro_lab(69);
    RenderedScene scene = gen_syndot(lab.spec, 2, 2, 18);
    YesBandResult r = yes_band(lab.params, lab.vocab, scene, 0, 4);
    REQUIRE(r.ks.size() == 5);
    REQUIRE(r.yes.size() == 5);
    CHECK(r.gt == 2);
    CHECK(r.ks.front() == 0);
    CHECK(r.ks.back() == 4);
    for (int y : r.yes) CHECK((y == 0 || y == 1));

    // the derived statistics are exactly band_stats of the raw responses
    YesBandResult again = band_stats(r.gt, r.ks, r.yes);
    CHECK(again.band_lo == r.band_lo);
    CHECK(again.band_hi == r.band_hi);
    CHECK(again.band_width == r.band_width);
    CHECK(again.oscillations == r.oscillations);

    CHECK_THROWS_AS(yes_band(lab.params, lab.vocab, scene, 3, 1), ConfigError);
}
