#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vibro/error.hpp"
#include "vibro/wavelet.hpp"

namespace vibro::classical {

namespace detail {

// Gaussian elimination with partial pivoting for the small normal-equation
// systems used below.
inline std::vector<double> solve_dense(std::vector<std::vector<double>> a, std::vector<double> b) {
    const std::size_t n = b.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
        if (std::abs(a[pivot][col]) < 1e-300) throw RuntimeError("solve_dense: singular system");
        std::swap(a[col], a[pivot]);
        std::swap(b[col], b[pivot]);
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = a[r][col] / a[col][col];
            for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n);
    for (std::size_t r = n; r-- > 0;) {
        double acc = b[r];
        for (std::size_t c = r + 1; c < n; ++c) acc -= a[r][c] * x[c];
        x[r] = acc / a[r][r];
    }
    return x;
}

// Least-squares polynomial evaluation kernel: weights k such that k . y is
// the degree-`polyorder` fit over positions pos, evaluated at q.
inline std::vector<double> lstsq_eval_kernel(std::span<const double> pos, int polyorder, double q) {
    const std::size_t m = pos.size();
    const std::size_t p = static_cast<std::size_t>(polyorder) + 1;
    std::vector<std::vector<double>> ata(p, std::vector<double>(p, 0.0));
    for (std::size_t r = 0; r < m; ++r) {
        double powi = 1.0;
        std::vector<double> powers(p);
        for (std::size_t j = 0; j < p; ++j) {
            powers[j] = powi;
            powi *= pos[r];
        }
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < p; ++j) ata[i][j] += powers[i] * powers[j];
    }
    std::vector<double> qvec(p);
    double powq = 1.0;
    for (std::size_t j = 0; j < p; ++j) {
        qvec[j] = powq;
        powq *= q;
    }
    const auto alpha = solve_dense(ata, qvec); // (A^T A)^-1 qvec
    std::vector<double> kernel(m, 0.0);
    for (std::size_t r = 0; r < m; ++r) {
        double powi = 1.0;
        for (std::size_t j = 0; j < p; ++j) {
            kernel[r] += alpha[j] * powi;
            powi *= pos[r];
        }
    }
    return kernel;
}

inline double symmetric_at(std::span<const double> x, std::ptrdiff_t i) {
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.size());
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
    return x[static_cast<std::size_t>(i)];
}

} // namespace detail

// Center kernel of the Savitzky-Golay filter (exposed for verification).
inline std::vector<double> savgol_kernel(int window, int polyorder) {
    std::vector<double> pos(static_cast<std::size_t>(window));
    const int h = window / 2;
    for (int i = 0; i < window; ++i) pos[static_cast<std::size_t>(i)] = static_cast<double>(i - h);
    return detail::lstsq_eval_kernel(pos, polyorder, 0.0);
}

// Savitzky-Golay smoothing: least-squares polynomial fit per centered window,
// edges filled by evaluating the fit of the nearest full window.
inline std::vector<double> savgol_denoise(std::span<const double> x, int window, int polyorder) {
    if (window < 1 || window % 2 == 0) throw ValidationError("savgol: window must be odd and >= 1");
    if (polyorder < 0 || polyorder >= window)
        throw ValidationError("savgol: polyorder must be < window");
    const std::size_t n = x.size();
    if (n < static_cast<std::size_t>(window)) throw ValidationError("savgol: series shorter than window");

    const int h = window / 2;
    std::vector<double> pos(static_cast<std::size_t>(window));
    for (int i = 0; i < window; ++i) pos[static_cast<std::size_t>(i)] = static_cast<double>(i - h);
    const auto center = detail::lstsq_eval_kernel(pos, polyorder, 0.0);

    std::vector<double> y(n, 0.0);
    for (std::size_t i = static_cast<std::size_t>(h); i + static_cast<std::size_t>(h) < n; ++i) {
        double acc = 0.0;
        for (int j = 0; j < window; ++j)
            acc += center[static_cast<std::size_t>(j)] * x[i + static_cast<std::size_t>(j) - static_cast<std::size_t>(h)];
        y[i] = acc;
    }
    // edge fits: evaluate the first/last full-window polynomial at the edge offsets
    for (int e = 0; e < h; ++e) {
        const auto kl = detail::lstsq_eval_kernel(pos, polyorder, static_cast<double>(e - h));
        const auto kr = detail::lstsq_eval_kernel(pos, polyorder, static_cast<double>(h - e));
        double accl = 0.0, accr = 0.0;
        for (int j = 0; j < window; ++j) {
            accl += kl[static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(j)];
            accr += kr[static_cast<std::size_t>(j)] * x[n - static_cast<std::size_t>(window) + static_cast<std::size_t>(j)];
        }
        y[static_cast<std::size_t>(e)] = accl;
        y[n - 1 - static_cast<std::size_t>(e)] = accr;
    }
    return y;
}

// Local-statistics Wiener filter with symmetric edge padding. When noise_var
// is absent it is estimated as the mean of the local variances.
inline std::vector<double> wiener_denoise(std::span<const double> x, int window,
                                          std::optional<double> noise_var = std::nullopt) {
    if (window < 3 || window % 2 == 0) throw ValidationError("wiener: window must be odd and >= 3");
    const std::size_t n = x.size();
    if (n == 0) throw ValidationError("wiener: empty series");
    const int h = window / 2;
    std::vector<double> mean(n), var(n);
    for (std::size_t i = 0; i < n; ++i) {
        double m = 0.0, m2 = 0.0;
        for (int j = -h; j <= h; ++j) {
            const double v = detail::symmetric_at(x, static_cast<std::ptrdiff_t>(i) + j);
            m += v;
            m2 += v * v;
        }
        m /= window;
        m2 /= window;
        mean[i] = m;
        var[i] = std::max(m2 - m * m, 0.0);
    }
    double nv;
    if (noise_var) {
        nv = *noise_var;
        if (nv < 0) throw ValidationError("wiener: noise_var must be >= 0");
    } else {
        nv = 0.0;
        for (double v : var) nv += v;
        nv /= static_cast<double>(n);
    }
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double denom = std::max(var[i], nv);
        const double gain = denom > 0.0 ? std::max(var[i] - nv, 0.0) / denom : 0.0;
        y[i] = mean[i] + gain * (x[i] - mean[i]);
    }
    return y;
}

struct TvResult {
    std::vector<double> y;
    bool converged = true;
    int iterations = 0;
    std::vector<double> objective_history; // objective after each iteration
};

namespace detail {

inline double tv_objective(std::span<const double> y, std::span<const double> x, double weight) {
    double data = 0.0, tv = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = y[i] - x[i];
        data += 0.5 * d * d;
    }
    for (std::size_t i = 0; i + 1 < y.size(); ++i) tv += std::abs(y[i + 1] - y[i]);
    return data + weight * tv;
}

} // namespace detail

// 1-D total-variation denoising, Chambolle dual projection with step 0.25.
// Minimizes 0.5 ||y - x||^2 + weight * sum |y[i+1] - y[i]|.
inline TvResult tv_denoise(std::span<const double> x, double weight, int max_iter = 2000,
                           double tol = 1e-6) {
    if (weight < 0) throw ValidationError("tv: weight must be >= 0");
    if (max_iter < 1) throw ValidationError("tv: max_iter must be >= 1");
    const std::size_t n = x.size();
    TvResult res;
    res.y.assign(x.begin(), x.end());
    res.objective_history.push_back(detail::tv_objective(res.y, x, weight));
    if (weight == 0.0 || n < 2) return res;

    const double tau = 0.25;
    std::vector<double> p(n - 1, 0.0), div(n, 0.0);
    bool converged = false;
    int it = 0;
    while (it < max_iter) {
        ++it;
        // div p and the dual gradient of (div p - x / weight)
        div[0] = p[0];
        for (std::size_t i = 1; i + 1 < n; ++i) div[i] = p[i] - p[i - 1];
        div[n - 1] = -p[n - 2];
        double delta = 0.0;
        std::vector<double> pn(n - 1);
        for (std::size_t i = 0; i + 1 < n; ++i) {
            const double g = (div[i + 1] - x[i + 1] / weight) - (div[i] - x[i] / weight);
            pn[i] = (p[i] + tau * g) / (1.0 + tau * std::abs(g));
            delta = std::max(delta, std::abs(pn[i] - p[i]));
        }
        p.swap(pn);
        div[0] = p[0];
        for (std::size_t i = 1; i + 1 < n; ++i) div[i] = p[i] - p[i - 1];
        div[n - 1] = -p[n - 2];
        for (std::size_t i = 0; i < n; ++i) res.y[i] = x[i] - weight * div[i];
        res.objective_history.push_back(detail::tv_objective(res.y, x, weight));
        if (delta < tol) {
            converged = true;
            break;
        }
    }
    res.converged = converged;
    res.iterations = it;
    return res;
}

enum class ShrinkRule { soft, hard };
enum class ThresholdMode { universal, fixed };

// Wavelet-shrinkage denoising: analyze, threshold the detail coefficients,
// reconstruct. The universal threshold is sigma_hat * sqrt(2 ln T) with
// sigma_hat = median(|d1|) / 0.6745.
inline std::vector<double> wavelet_shrinkage_denoise(std::span<const double> x,
                                                     const dsp::WaveletSpec& spec,
                                                     ShrinkRule rule = ShrinkRule::soft,
                                                     ThresholdMode mode = ThresholdMode::universal,
                                                     double fixed_threshold = 0.0) {
    auto pyramid = dsp::dwt(x, spec);
    double threshold = fixed_threshold;
    if (mode == ThresholdMode::universal) {
        std::vector<double> mags(pyramid.details[0].size());
        for (std::size_t i = 0; i < mags.size(); ++i) mags[i] = std::abs(pyramid.details[0][i]);
        std::sort(mags.begin(), mags.end());
        const std::size_t m = mags.size();
        const double median = m % 2 == 1 ? mags[m / 2] : 0.5 * (mags[m / 2 - 1] + mags[m / 2]);
        const double sigma_hat = median / 0.6745;
        threshold = sigma_hat * std::sqrt(2.0 * std::log(static_cast<double>(x.size())));
    }
    if (threshold < 0) throw ValidationError("shrinkage: threshold must be >= 0");
    for (auto& level : pyramid.details)
        for (auto& c : level) {
            if (rule == ShrinkRule::soft) {
                const double mag = std::max(std::abs(c) - threshold, 0.0);
                c = c > 0 ? mag : -mag;
            } else {
                if (std::abs(c) <= threshold) c = 0.0;
            }
        }
    return dsp::idwt(pyramid, spec);
}

// Tagged baseline parameters, as they appear in the harness configuration.
struct BaselineConfig {
    std::string method = "savgol"; // savgol | wiener | tv | wavelet
    int window = 11;
    int polyorder = 3;
    std::optional<double> noise_var; // wiener; estimated when absent
    double tv_weight = 0.1;
    int tv_max_iter = 2000;
    double tv_tol = 1e-6;
    dsp::WaveletSpec wavelet{"db4", 3, dsp::BoundaryMode::symmetric};
    ShrinkRule rule = ShrinkRule::soft;
    ThresholdMode threshold = ThresholdMode::universal;
    double fixed_threshold = 0.0;

    void validate(std::size_t series_length) const {
        if (method == "savgol") {
            if (window % 2 == 0 || polyorder >= window)
                throw ValidationError("baseline savgol: window odd and > polyorder required");
        } else if (method == "wiener") {
            if (window < 3 || window % 2 == 0)
                throw ValidationError("baseline wiener: window must be odd and >= 3");
        } else if (method == "tv") {
            if (tv_weight < 0 || tv_max_iter < 1)
                throw ValidationError("baseline tv: weight >= 0 and max_iter >= 1 required");
        } else if (method == "wavelet") {
            wavelet.validate(series_length);
        } else {
            throw ValidationError("baseline: unknown method tag " + method);
        }
    }

    std::string describe() const {
        if (method == "savgol")
            return "savgol(w=" + std::to_string(window) + ",p=" + std::to_string(polyorder) + ")";
        if (method == "wiener") return "wiener(w=" + std::to_string(window) + ")";
        if (method == "tv") return "tv(weight=" + std::to_string(tv_weight) + ")";
        return "wavelet(" + wavelet.family + ",l=" + std::to_string(wavelet.levels) +
               (rule == ShrinkRule::soft ? ",soft" : ",hard") + ")";
    }
};

inline std::vector<double> apply_baseline(std::span<const double> x, const BaselineConfig& cfg) {
    cfg.validate(x.size());
    if (cfg.method == "savgol") return savgol_denoise(x, cfg.window, cfg.polyorder);
    if (cfg.method == "wiener") return wiener_denoise(x, cfg.window, cfg.noise_var);
    if (cfg.method == "tv") return tv_denoise(x, cfg.tv_weight, cfg.tv_max_iter, cfg.tv_tol).y;
    return wavelet_shrinkage_denoise(x, cfg.wavelet, cfg.rule, cfg.threshold, cfg.fixed_threshold);
}

} // namespace vibro::classical
