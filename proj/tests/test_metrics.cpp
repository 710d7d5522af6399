#include <cmath>

#include "countlab/common.hpp"
#include "countlab/metrics.hpp"
#include "doctest.h"
#include "oracle.hpp"

using namespace countlab;

namespace {

PredictionRecord rec(int gt, int parsed) {
    PredictionRecord r;
    r.gt = gt;
    r.parsed = parsed;
    r.raw = parsed >= 0 ? std::to_string(parsed) : "?";
    return r;
}

}  // namespace

TEST_CASE("the worked metrics example reproduces to machine precision") {
    std::vector<PredictionRecord> records = {rec(3, 3), rec(4, 5), rec(7, -1)};
    MetricsReport m = compute_metrics(records);
    CHECK(std::fabs(m.acc - 1.0 / 3.0) < 1e-12);
    CHECK(std::fabs(m.mae - 3.0) < 1e-12);
    CHECK(std::fabs(m.rmse - std::sqrt(65.0 / 3.0)) < 1e-12);
    CHECK(std::fabs(m.obo - 2.0 / 3.0) < 1e-12);
    CHECK(m.n == 3);
    CHECK(std::fabs(m.parse_failure_rate - 1.0 / 3.0) < 1e-12);
}

TEST_CASE("metrics agree exactly with the reference implementation") {
    std::uint64_t state = 12345;
    auto next = [&]() {
        state = state * 6364136223846793005ull + 1442695040888963407ull;
        return state >> 33;
    };
    for (int set = 0; set < 200; ++set) {
        std::size_t n = 1 + next() % 50;
        std::vector<PredictionRecord> records;
        std::vector<int> preds, gts;
        for (std::size_t i = 0; i < n; ++i) {
            int p = static_cast<int>(next() % 14) - 1;  // -1..12
            int g = static_cast<int>(next() % 10);
            preds.push_back(p);
            gts.push_back(g);
            records.push_back(rec(g, p));
        }
        MetricsReport got = compute_metrics(records);
        oracle::Metrics expect = oracle::metrics(preds, gts);
        CHECK(got.acc == expect.acc);
        CHECK(got.mae == expect.mae);
        CHECK(got.rmse == expect.rmse);
        CHECK(got.obo == expect.obo);
        CHECK(got.acc <= got.obo);
        CHECK(got.mae <= got.rmse + 1e-12);
    }
}

TEST_CASE("per-count rows carry each count's own metrics") {
    std::vector<PredictionRecord> records = {rec(2, 2), rec(2, 4), rec(5, 5),
                                             rec(5, 5), rec(5, 6)};
    MetricsReport m = compute_metrics(records);
    REQUIRE(m.per_count.size() == 2);
    CHECK(m.per_count[0].count == 2);
    CHECK(m.per_count[0].n == 2);
    CHECK(std::fabs(m.per_count[0].acc - 0.5) < 1e-12);
    CHECK(std::fabs(m.per_count[0].mae - 1.0) < 1e-12);
    CHECK(m.per_count[1].count == 5);
    CHECK(m.per_count[1].n == 3);
    CHECK(std::fabs(m.per_count[1].obo - 1.0) < 1e-12);

    oracle::Metrics five = oracle::metrics({5, 5, 6}, {5, 5, 5});
    CHECK(m.per_count[1].acc == five.acc);
    CHECK(m.per_count[1].rmse == five.rmse);
}

TEST_CASE("aggregate metrics ignore record order") {
    std::vector<PredictionRecord> a = {rec(1, 1), rec(2, 5), rec(3, -1), rec(4, 4)};
    std::vector<PredictionRecord> b = {a[3], a[1], a[0], a[2]};
    MetricsReport ma = compute_metrics(a), mb = compute_metrics(b);
    CHECK(ma.acc == mb.acc);
    CHECK(ma.mae == mb.mae);
    CHECK(ma.rmse == mb.rmse);
    CHECK(ma.obo == mb.obo);
}

TEST_CASE("answer parsing accepts short digit runs and nothing else") {
    CHECK(parse_answer("3") == 3);
    CHECK(parse_answer("12") == 12);
    CHECK(parse_answer("007") == 7);
    CHECK(parse_answer("999999") == 999999);
    CHECK(parse_answer("") == -1);
    CHECK(parse_answer("1234567") == -1);
    CHECK(parse_answer("12a") == -1);
    CHECK(parse_answer("-3") == -1);
    CHECK(parse_answer(" 3") == -1);
    CHECK(parse_answer("yes") == -1);
}

TEST_CASE("empty prediction sets are rejected") {
    CHECK_THROWS_AS(compute_metrics({}), DataError);
}
