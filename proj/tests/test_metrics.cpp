#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "vibro/metrics.hpp"
#include "vibro/rng.hpp"

using namespace vibro;
using namespace vibro::metrics;

TEST_CASE("metrics: the hand-derived 20 dB / 20 dB / 10% triple") {
    std::vector<double> y{1.0, -1.0, 1.0, -1.0};
    std::vector<double> yhat{0.9, -0.9, 0.9, -0.9};
    const auto p = psnr(yhat, y);
    const auto s = snr(yhat, y);
    REQUIRE_FALSE(p.infinite);
    REQUIRE_FALSE(s.infinite);
    CHECK(std::abs(p.value - 20.0) < 1e-12);
    CHECK(std::abs(s.value - 20.0) < 1e-12);
    CHECK(std::abs(wmape(yhat, y) - 10.0) < 1e-12);
}

TEST_CASE("metrics: perfect reconstruction hits the sentinel") {
    std::vector<double> y{0.3, -0.2, 0.9};
    CHECK(psnr(y, y).infinite);
    CHECK(snr(y, y).infinite);
    CHECK(wmape(y, y) == 0.0);
}

TEST_CASE("metrics: scale invariance of psnr and wmape") {
    std::vector<double> y{1.0, -0.4, 0.7, 0.1};
    std::vector<double> yhat{0.8, -0.5, 0.75, 0.2};
    const double p1 = psnr(yhat, y).value;
    const double w1 = wmape(yhat, y);
    std::vector<double> y10(y), yhat10(yhat);
    for (auto& v : y10) v *= 10.0;
    for (auto& v : yhat10) v *= 10.0;
    CHECK(std::abs(psnr(yhat10, y10).value - p1) < 1e-12);
    CHECK(std::abs(wmape(yhat10, yhat10.size() ? y10 : y10) - w1) < 1e-12);
}

TEST_CASE("metrics: zero estimate on nonzero signal gives exactly 0 dB SNR") {
    std::vector<double> y{0.5, -1.0, 0.25};
    std::vector<double> zero(y.size(), 0.0);
    CHECK(std::abs(snr(zero, y).value) < 1e-12);
}

TEST_CASE("metrics: undefined cases throw") {
    std::vector<double> zero(4, 0.0);
    std::vector<double> yhat{1.0, 2.0, 3.0, 4.0};
    CHECK_THROWS_AS(snr(yhat, zero), ValidationError);
    CHECK_THROWS_AS(wmape(yhat, zero), ValidationError);
    CHECK_THROWS_AS(psnr(yhat, zero), ValidationError);
    std::vector<double> shorter{1.0};
    CHECK_THROWS_AS(psnr(shorter, yhat), ValidationError);
}

TEST_CASE("metrics: psnr >= snr when the peak dominates the mean power") {
    Rng rng(6);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> y(64), yhat(64);
        for (std::size_t i = 0; i < y.size(); ++i) {
            y[i] = rng.normal(0.0, 1.0);
            yhat[i] = y[i] + rng.normal(0.0, 0.1);
        }
        double peak = 0.0, power = 0.0;
        for (double v : y) {
            peak = std::max(peak, std::abs(v));
            power += v * v;
        }
        power /= static_cast<double>(y.size());
        if (peak * peak >= power) CHECK(psnr(yhat, y).value >= snr(yhat, y).value - 1e-12);
    }
}

TEST_CASE("metrics: permutation of time order changes nothing") {
    Rng rng(9);
    std::vector<double> y(32), yhat(32);
    for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] = rng.normal(0.0, 1.0);
        yhat[i] = y[i] + rng.normal(0.0, 0.2);
    }
    std::vector<std::size_t> perm(y.size());
    std::iota(perm.begin(), perm.end(), 0u);
    std::shuffle(perm.begin(), perm.end(), std::mt19937{4});
    std::vector<double> yp(y.size()), yhp(y.size());
    for (std::size_t i = 0; i < perm.size(); ++i) {
        yp[i] = y[perm[i]];
        yhp[i] = yhat[perm[i]];
    }
    CHECK(std::abs(psnr(yhat, y).value - psnr(yhp, yp).value) < 1e-12);
    CHECK(std::abs(snr(yhat, y).value - snr(yhp, yp).value) < 1e-12);
    CHECK(std::abs(wmape(yhat, y) - wmape(yhp, yp)) < 1e-12);
}

TEST_CASE("error_stats: quantile definitions") {
    std::vector<double> y(5, 0.0);
    std::vector<double> yhat{-2.0, -1.0, 0.0, 1.0, 2.0};
    const auto q = error_stats(yhat, y);
    CHECK(q.min == -2.0);
    CHECK(q.q1 == -1.0);
    CHECK(q.median == 0.0);
    CHECK(q.q3 == 1.0);
    CHECK(q.max == 2.0);

    const auto zero = error_stats(y, y);
    CHECK(zero.min == 0.0);
    CHECK(zero.max == 0.0);

    std::vector<double> one{0.7};
    std::vector<double> oneref{0.2};
    const auto single = error_stats(one, oneref);
    CHECK(single.min == Catch::Approx(0.5));
    CHECK(single.q1 == Catch::Approx(0.5));
    CHECK(single.median == Catch::Approx(0.5));
    CHECK(single.q3 == Catch::Approx(0.5));
    CHECK(single.max == Catch::Approx(0.5));
}

TEST_CASE("aggregate: sentinel values stay out of the moments") {
    std::vector<MetricValue> vs{MetricValue::of(10.0), MetricValue::sentinel(),
                                MetricValue::of(30.0)};
    const auto a = aggregate(vs);
    CHECK(a.n_finite == 2);
    CHECK(a.n_infinite == 1);
    CHECK(a.mean == Catch::Approx(20.0));
    CHECK(a.stddev == Catch::Approx(10.0));

    std::vector<MetricValue> all_inf{MetricValue::sentinel()};
    CHECK(aggregate(all_inf).mean_str() == "inf");
}

TEST_CASE("eval csv: column contract") {
    CHECK(eval_csv_header() ==
          "method,sigma_eps,psnr_mean,psnr_std,snr_mean,snr_std,wmape_mean,wmape_std,n");
    EvalRow r;
    r.method = "ensemble";
    r.sigma_eps = 0.1;
    r.psnr = aggregate(std::vector<MetricValue>{MetricValue::of(30.0)});
    r.snr = r.psnr;
    r.wmape = aggregate(std::vector<MetricValue>{MetricValue::of(7.5)});
    r.n = 1;
    CHECK(eval_csv_row(r) == "ensemble,0.100000,30.000000,0.000000,30.000000,0.000000,7.500000,0.000000,1");
}
