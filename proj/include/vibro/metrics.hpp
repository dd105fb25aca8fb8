#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "vibro/error.hpp"

namespace vibro::metrics {

// Metric result carrying a distinguished perfect-score sentinel. Reports
// render the sentinel as the string "inf"; it never becomes a float infinity.
struct MetricValue {
    double value = 0.0;
    bool infinite = false;

    static MetricValue sentinel() { return {0.0, true}; }
    static MetricValue of(double v) { return {v, false}; }
};

namespace detail {

inline void check_lengths(std::span<const double> a, std::span<const double> b, const char* op) {
    if (a.size() != b.size() || a.empty())
        throw ValidationError(std::string(op) + ": series must share a nonzero length");
}

} // namespace detail

// PSNR with MAX taken as the peak |y| of the clean reference.
inline MetricValue psnr(std::span<const double> yhat, std::span<const double> y) {
    detail::check_lengths(yhat, y, "psnr");
    double peak = 0.0, mse = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        peak = std::max(peak, std::abs(y[i]));
        const double d = yhat[i] - y[i];
        mse += d * d;
    }
    mse /= static_cast<double>(y.size());
    if (mse == 0.0) return MetricValue::sentinel();
    if (peak == 0.0) throw ValidationError("psnr: clean reference is identically zero");
    return MetricValue::of(10.0 * std::log10(peak * peak / mse));
}

inline MetricValue snr(std::span<const double> yhat, std::span<const double> y) {
    detail::check_lengths(yhat, y, "snr");
    double sig = 0.0, res = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        sig += y[i] * y[i];
        const double d = yhat[i] - y[i];
        res += d * d;
    }
    if (sig == 0.0) throw ValidationError("snr: clean signal power is zero");
    if (res == 0.0) return MetricValue::sentinel();
    return MetricValue::of(10.0 * std::log10(sig / res));
}

// Weighted MAPE in percent: 100 * sum|err| / sum|clean|.
inline double wmape(std::span<const double> yhat, std::span<const double> y) {
    detail::check_lengths(yhat, y, "wmape");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        num += std::abs(yhat[i] - y[i]);
        den += std::abs(y[i]);
    }
    if (den == 0.0) throw ValidationError("wmape: clean signal is identically zero");
    return 100.0 * num / den;
}

// Five-number summary with linear-interpolation (type-7) quantiles.
struct Quantiles {
    double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
};

inline Quantiles error_stats(std::span<const double> yhat, std::span<const double> y) {
    detail::check_lengths(yhat, y, "error_stats");
    std::vector<double> e(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) e[i] = yhat[i] - y[i];
    std::sort(e.begin(), e.end());
    const auto type7 = [&](double q) {
        const double pos = q * static_cast<double>(e.size() - 1);
        const std::size_t lo = static_cast<std::size_t>(pos);
        const double frac = pos - static_cast<double>(lo);
        if (lo + 1 >= e.size()) return e.back();
        return e[lo] * (1.0 - frac) + e[lo + 1] * frac;
    };
    return {e.front(), type7(0.25), type7(0.5), type7(0.75), e.back()};
}

// Mean/std aggregate that keeps sentinel counts out of the moments.
struct Aggregate {
    double mean = 0.0;
    double stddev = 0.0;
    std::size_t n_finite = 0;
    std::size_t n_infinite = 0;

    std::string mean_str() const { return n_finite == 0 ? "inf" : format(mean); }
    std::string std_str() const { return n_finite == 0 ? "inf" : format(stddev); }

    static std::string format(double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.6f", v);
        return buf;
    }
};

inline Aggregate aggregate(std::span<const MetricValue> values) {
    Aggregate a;
    double acc = 0.0;
    for (const auto& v : values) {
        if (v.infinite) {
            ++a.n_infinite;
        } else {
            ++a.n_finite;
            acc += v.value;
        }
    }
    if (a.n_finite > 0) {
        a.mean = acc / static_cast<double>(a.n_finite);
        double ss = 0.0;
        for (const auto& v : values)
            if (!v.infinite) ss += (v.value - a.mean) * (v.value - a.mean);
        a.stddev = std::sqrt(ss / static_cast<double>(a.n_finite));
    }
    return a;
}

// One row of the comparison report (per method, per noise level).
struct EvalRow {
    std::string method;
    double sigma_eps = 0.0;
    Aggregate psnr, snr, wmape;
    Quantiles error_quartiles;
    std::size_t n = 0;
};

inline std::string eval_csv_header() {
    return "method,sigma_eps,psnr_mean,psnr_std,snr_mean,snr_std,wmape_mean,wmape_std,n";
}

inline std::string eval_csv_row(const EvalRow& r) {
    char sigma[32];
    std::snprintf(sigma, sizeof(sigma), "%.6f", r.sigma_eps);
    return r.method + "," + sigma + "," + r.psnr.mean_str() + "," + r.psnr.std_str() + "," +
           r.snr.mean_str() + "," + r.snr.std_str() + "," + r.wmape.mean_str() + "," +
           r.wmape.std_str() + "," + std::to_string(r.n);
}

} // namespace vibro::metrics
