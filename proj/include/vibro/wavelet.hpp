#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "vibro/error.hpp"

namespace vibro::dsp {

enum class BoundaryMode { symmetric, periodic, zero };

inline BoundaryMode boundary_mode_from_string(const std::string& s) {
    if (s == "symmetric") return BoundaryMode::symmetric;
    if (s == "periodic") return BoundaryMode::periodic;
    if (s == "zero") return BoundaryMode::zero;
    throw ValidationError("unknown boundary mode: " + s);
}

// Two-channel analysis/synthesis bank. High-pass filters follow from the
// low-pass pair: dec_hi[j] = (-1)^(j+1) rec_lo[j], rec_hi[j] = (-1)^j dec_lo[j].
struct FilterBank {
    std::string name;
    std::vector<double> dec_lo, dec_hi, rec_lo, rec_hi;
    bool orthogonal = true;

    static FilterBank from_lowpass(std::string name, std::vector<double> dec_lo,
                                   std::vector<double> rec_lo, bool orthogonal) {
        FilterBank b;
        b.name = std::move(name);
        b.dec_lo = std::move(dec_lo);
        b.rec_lo = std::move(rec_lo);
        b.orthogonal = orthogonal;
        const std::size_t f = b.dec_lo.size();
        b.dec_hi.resize(f);
        b.rec_hi.resize(f);
        for (std::size_t j = 0; j < f; ++j) {
            b.dec_hi[j] = (j % 2 == 0 ? -1.0 : 1.0) * b.rec_lo[j];
            b.rec_hi[j] = (j % 2 == 0 ? 1.0 : -1.0) * b.dec_lo[j];
        }
        return b;
    }

    std::size_t length() const { return dec_lo.size(); }
};

namespace detail {

inline FilterBank orthogonal_bank(std::string name, std::vector<double> rec_lo) {
    std::vector<double> dec_lo(rec_lo.rbegin(), rec_lo.rend());
    return FilterBank::from_lowpass(std::move(name), std::move(dec_lo), std::move(rec_lo), true);
}

inline const double kSqrt2 = std::sqrt(2.0);

} // namespace detail

// Family identifiers follow the usual "dbN" / "biorP.Q" naming, where dbN has
// N vanishing moments (2N taps).
inline FilterBank wavelet_bank(const std::string& family) {
    using detail::orthogonal_bank;
    if (family == "db1" || family == "haar")
        return orthogonal_bank("db1", {0.7071067811865476, 0.7071067811865476});
    if (family == "db2")
        return orthogonal_bank("db2", {0.48296291314469025, 0.8365163037378079,
                                       0.22414386804185735, -0.12940952255092145});
    if (family == "db3")
        return orthogonal_bank("db3", {0.3326705529509569, 0.8068915093133388,
                                       0.4598775021193313, -0.13501102001039084,
                                       -0.08544127388224149, 0.035226291882100656});
    if (family == "db4")
        return orthogonal_bank("db4", {0.23037781330885523, 0.7148465705525415,
                                       0.6308807679295904, -0.02798376941698385,
                                       -0.18703481171888114, 0.030841381835986965,
                                       0.032883011666982945, -0.010597401784997278});
    if (family == "bior1.3") {
        const double s = detail::kSqrt2;
        std::vector<double> dec_lo = {-1.0 / 16, 1.0 / 16, 0.5, 0.5, 1.0 / 16, -1.0 / 16};
        std::vector<double> rec_lo = {0.0, 0.0, 0.5, 0.5, 0.0, 0.0};
        for (auto& v : dec_lo) v *= s;
        for (auto& v : rec_lo) v *= s;
        return FilterBank::from_lowpass("bior1.3", std::move(dec_lo), std::move(rec_lo), false);
    }
    if (family == "bior2.2") {
        const double s = detail::kSqrt2;
        std::vector<double> dec_lo = {0.0, -1.0 / 8, 1.0 / 4, 3.0 / 4, 1.0 / 4, -1.0 / 8};
        std::vector<double> rec_lo = {0.0, 1.0 / 4, 1.0 / 2, 1.0 / 4, 0.0, 0.0};
        for (auto& v : dec_lo) v *= s;
        for (auto& v : rec_lo) v *= s;
        return FilterBank::from_lowpass("bior2.2", std::move(dec_lo), std::move(rec_lo), false);
    }
    throw ValidationError("unknown wavelet family: " + family);
}

struct WaveletSpec {
    std::string family = "db4";
    int levels = 3;
    BoundaryMode mode = BoundaryMode::symmetric;

    void validate(std::size_t series_length) const {
        wavelet_bank(family); // throws on unknown family
        if (levels < 1) throw ValidationError("wavelet levels must be >= 1");
        const int cap = static_cast<int>(std::floor(std::log2(static_cast<double>(series_length))));
        if (levels > cap)
            throw ValidationError("wavelet levels " + std::to_string(levels) +
                                  " too deep for series length " + std::to_string(series_length));
    }
};

// Analysis coefficients: details[0] is the finest level.
struct WaveletPyramid {
    std::vector<std::vector<double>> details;
    std::vector<double> approx;
    std::vector<std::size_t> input_lengths; // per level, for reconstruction
};

namespace detail {

inline double extended_sample(std::span<const double> x, std::ptrdiff_t i, BoundaryMode mode) {
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.size());
    switch (mode) {
        case BoundaryMode::zero:
            if (i < 0 || i >= n) return 0.0;
            return x[static_cast<std::size_t>(i)];
        case BoundaryMode::periodic: {
            std::ptrdiff_t k = i % n;
            if (k < 0) k += n;
            return x[static_cast<std::size_t>(k)];
        }
        case BoundaryMode::symmetric: {
            // half-sample symmetry: ... x1 x0 | x0 x1 ... xn-1 | xn-1 ...
            std::ptrdiff_t k = i;
            const std::ptrdiff_t period = 2 * n;
            k %= period;
            if (k < 0) k += period;
            if (k >= n) k = period - 1 - k;
            return x[static_cast<std::size_t>(k)];
        }
    }
    return 0.0;
}

} // namespace detail

// Single-level analysis: a[i], d[i] = sum_j filt[j] * x[2i + 1 - j], with the
// signal extended by the boundary mode. Output length floor((N + F - 1) / 2).
inline void dwt_single(std::span<const double> x, const FilterBank& bank, BoundaryMode mode,
                       std::vector<double>& approx, std::vector<double>& detail_out) {
    const std::size_t n = x.size();
    const std::size_t f = bank.length();
    if (n < f) throw ValidationError("dwt: series shorter than filter (" + std::to_string(n) +
                                     " < " + std::to_string(f) + ")");
    const std::size_t out = (n + f - 1) / 2;
    approx.assign(out, 0.0);
    detail_out.assign(out, 0.0);
    for (std::size_t i = 0; i < out; ++i) {
        double a = 0.0, d = 0.0;
        const std::ptrdiff_t base = static_cast<std::ptrdiff_t>(2 * i + 1);
        for (std::size_t j = 0; j < f; ++j) {
            const double v = detail::extended_sample(x, base - static_cast<std::ptrdiff_t>(j), mode);
            a += bank.dec_lo[j] * v;
            d += bank.dec_hi[j] * v;
        }
        approx[i] = a;
        detail_out[i] = d;
    }
}

// Single-level synthesis, trimmed to the original length n.
inline std::vector<double> idwt_single(std::span<const double> approx,
                                       std::span<const double> detail_in, const FilterBank& bank,
                                       std::size_t n) {
    const std::size_t f = bank.length();
    const std::size_t l = approx.size();
    if (detail_in.size() != l) throw ValidationError("idwt: approx/detail length mismatch");
    std::vector<double> y(n, 0.0);
    for (std::size_t k = 0; k < l; ++k) {
        // y[m] += a[k] rec_lo[m + F - 2 - 2k] + d[k] rec_hi[...]
        const std::ptrdiff_t off = 2 * static_cast<std::ptrdiff_t>(k) - (static_cast<std::ptrdiff_t>(f) - 2);
        for (std::size_t j = 0; j < f; ++j) {
            const std::ptrdiff_t m = off + static_cast<std::ptrdiff_t>(j);
            if (m < 0 || m >= static_cast<std::ptrdiff_t>(n)) continue;
            y[static_cast<std::size_t>(m)] += approx[k] * bank.rec_lo[j] + detail_in[k] * bank.rec_hi[j];
        }
    }
    return y;
}

inline WaveletPyramid dwt(std::span<const double> x, const WaveletSpec& spec) {
    spec.validate(x.size());
    const FilterBank bank = wavelet_bank(spec.family);
    WaveletPyramid p;
    std::vector<double> cur(x.begin(), x.end());
    for (int lv = 0; lv < spec.levels; ++lv) {
        p.input_lengths.push_back(cur.size());
        std::vector<double> a, d;
        dwt_single(cur, bank, spec.mode, a, d);
        p.details.push_back(std::move(d));
        cur = std::move(a);
    }
    p.approx = std::move(cur);
    return p;
}

inline std::vector<double> idwt(const WaveletPyramid& p, const WaveletSpec& spec) {
    const FilterBank bank = wavelet_bank(spec.family);
    if (p.details.size() != p.input_lengths.size())
        throw ValidationError("idwt: malformed pyramid");
    std::vector<double> cur = p.approx;
    for (std::size_t lv = p.details.size(); lv-- > 0;)
        cur = idwt_single(cur, p.details[lv], bank, p.input_lengths[lv]);
    return cur;
}

} // namespace vibro::dsp
