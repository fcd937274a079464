#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "gridcast/metrics.hpp"
#include "gridcast/rng.hpp"

using namespace gridcast;
using metrics::PredictionPair;

TEST_CASE("abs_error") {
    CHECK(metrics::abs_error(5, 5) == 0);
    CHECK(metrics::abs_error(10, 7) == 3);
    CHECK(metrics::abs_error(-2, 3) == 5);
}

TEST_CASE("abs_pct_error") {
    CHECK(metrics::abs_pct_error(10, 9).value() == doctest::Approx(0.1));
    CHECK(metrics::abs_pct_error(-10, -9).value() == doctest::Approx(0.1));
    CHECK_FALSE(metrics::abs_pct_error(0, 1).has_value());
}

TEST_CASE("mae and rmse on small sets") {
    std::vector<PredictionPair> exact = {{1, 1}, {2, 2}};
    CHECK(metrics::mae(exact) == 0);
    CHECK(metrics::rmse(exact) == 0);

    std::vector<PredictionPair> off = {{0, 3}, {0, 4}};
    CHECK(metrics::mae(off) == doctest::Approx(3.5));
    CHECK(metrics::rmse(off) == doctest::Approx(std::sqrt(12.5)));

    std::vector<PredictionPair> single = {{7.25, 3.5}};
    CHECK(metrics::mae(single) == doctest::Approx(3.75));
    CHECK(metrics::rmse(single) == doctest::Approx(metrics::mae(single)));

    std::vector<PredictionPair> empty;
    CHECK_THROWS_AS(metrics::mae(empty), std::invalid_argument);
    CHECK_THROWS_AS(metrics::rmse(empty), std::invalid_argument);
}

TEST_CASE("aggregates match a naive loop oracle on random pairs") {
    Rng rng(20140101);
    std::vector<PredictionPair> pairs;
    for (int i = 0; i < 1000; ++i) {
        double real = rng.normal(20.0, 60.0);
        double pred = real + rng.normal(0.0, 5.0);
        if (i % 37 == 0) real *= 250.0;  // spiky magnitudes
        pairs.emplace_back(real, pred);
    }
    long double abs_sum = 0.0L, sq_sum = 0.0L;
    for (const auto& [r, p] : pairs) {
        abs_sum += std::abs((long double)r - p);
        sq_sum += ((long double)r - p) * ((long double)r - p);
    }
    double mae_oracle = (double)(abs_sum / pairs.size());
    double rmse_oracle = std::sqrt((double)(sq_sum / pairs.size()));

    CHECK(metrics::mae(pairs) == doctest::Approx(mae_oracle).epsilon(1e-12));
    CHECK(metrics::rmse(pairs) == doctest::Approx(rmse_oracle).epsilon(1e-12));
    CHECK(metrics::mae(pairs) <= metrics::rmse(pairs));
}

TEST_CASE("mae <= rmse and permutation invariance") {
    Rng rng(7);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<PredictionPair> pairs;
        int n = 1 + (int)rng.uniform_below(200);
        for (int i = 0; i < n; ++i) {
            pairs.emplace_back(rng.normal(0, 10), rng.normal(0, 10));
        }
        double m = metrics::mae(pairs);
        double r = metrics::rmse(pairs);
        CHECK(m <= r + 1e-15);

        std::vector<PredictionPair> shuffled = pairs;
        std::mt19937 g(rep);
        std::shuffle(shuffled.begin(), shuffled.end(), g);
        CHECK(metrics::mae(shuffled) == doctest::Approx(m).epsilon(1e-12));
        CHECK(metrics::rmse(shuffled) == doctest::Approx(r).epsilon(1e-12));
    }

    // equality iff all absolute errors equal
    std::vector<PredictionPair> equal_err = {{0, 2}, {5, 3}, {10, 12}};
    CHECK(metrics::mae(equal_err) == doctest::Approx(metrics::rmse(equal_err)));
}

TEST_CASE("evaluate keeps per-point traces") {
    std::vector<metrics::PointError> pts;
    Timestamp t = Timestamp::from_ymd(2014, 1, 1);
    pts.push_back({t, 10.0, 8.0, 2.0});
    pts.push_back({t.plus_steps(1), 20.0, 21.0, 1.0});
    auto r = metrics::evaluate(pts);
    CHECK(r.n == 2);
    CHECK(r.mae == doctest::Approx(1.5));
    CHECK(r.per_point.size() == 2);
    CHECK(r.per_point[0].timestamp == t);

    std::vector<PredictionPair> pairs = {{10.0, 8.0}, {20.0, 21.0}};
    auto r2 = metrics::evaluate(pairs);
    CHECK(r2.mae == doctest::Approx(r.mae));
    CHECK(r2.per_point.empty());
}
