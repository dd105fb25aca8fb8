#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "vibro/error.hpp"
#include "vibro/fft.hpp"
#include "vibro/wavelet.hpp"

namespace vibro::dsp {

// Wavelet channel assignment for the CNN input. Channels 1 and 2 carry the
// level-1 details of two families, channel 3 the deepest approximation.
struct FeatureSpec {
    std::string detail_family_a = "db4";
    std::string detail_family_b = "bior2.2";
    std::string approx_family = "db4";
    int approx_levels = 4;
    BoundaryMode mode = BoundaryMode::symmetric;
};

namespace detail {

// Linear resample of y (length m) onto n points spanning the same interval.
inline std::vector<double> resample_linear(std::span<const double> y, std::size_t n) {
    const std::size_t m = y.size();
    std::vector<double> out(n, 0.0);
    if (m == 1) {
        std::fill(out.begin(), out.end(), y[0]);
        return out;
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double pos = static_cast<double>(i) * static_cast<double>(m - 1) /
                           static_cast<double>(n - 1);
        const std::size_t lo = std::min(static_cast<std::size_t>(pos), m - 2);
        const double frac = pos - static_cast<double>(lo);
        out[i] = y[lo] * (1.0 - frac) + y[lo + 1] * frac;
    }
    return out;
}

// Sample-and-hold upsampling; keeps coefficient magnitudes untouched.
inline std::vector<double> upsample_hold(std::span<const double> c, std::size_t n) {
    std::vector<double> out(n);
    const std::size_t m = c.size();
    for (std::size_t i = 0; i < n; ++i) out[i] = c[std::min(i * m / n, m - 1)];
    return out;
}

} // namespace detail

// Max-normalized magnitude spectrum as a per-timestep channel. The signal is
// zero-padded to the next power of two, the first floor(T/2)+1 magnitude bins
// are kept and linearly resampled back to length T.
inline std::vector<double> fft_feature_channel(std::span<const double> x) {
    const std::size_t t = x.size();
    if (t < 2) throw ValidationError("fft_feature_channel: need length >= 2");
    const std::size_t padded = detail::next_pow2(t);
    std::vector<double> xp(x.begin(), x.end());
    xp.resize(padded, 0.0);
    const Spectrum s = dft_forward(xp);
    const std::size_t half = t / 2 + 1;
    std::vector<double> mag(half);
    for (std::size_t k = 0; k < half; ++k) mag[k] = std::abs(s.bins[k]);
    auto ch = detail::resample_linear(mag, t);
    const double peak = *std::max_element(ch.begin(), ch.end());
    if (peak > 0.0)
        for (auto& v : ch) v /= peak;
    return ch;
}

// Three stacked wavelet channels, each length T.
inline std::vector<std::vector<double>> wavelet_channels(std::span<const double> x,
                                                         const FeatureSpec& spec = {}) {
    const std::size_t t = x.size();
    if (t < 8) throw ValidationError("wavelet_channels: need length >= 8");
    std::vector<double> a, d;
    dwt_single(x, wavelet_bank(spec.detail_family_a), spec.mode, a, d);
    std::vector<std::vector<double>> ch(3);
    ch[0] = detail::upsample_hold(d, t);
    dwt_single(x, wavelet_bank(spec.detail_family_b), spec.mode, a, d);
    ch[1] = detail::upsample_hold(d, t);
    WaveletSpec ws{spec.approx_family, spec.approx_levels, spec.mode};
    ch[2] = detail::upsample_hold(dwt(x, ws).approx, t);
    return ch;
}

// Per-signal model input: 2 x T for the recurrent branch (raw signal plus the
// FFT channel) and 3 x T for the convolutional branch. Channel-major layout.
struct FeatureBundle {
    std::size_t series_length = 0;
    std::vector<double> lstm_input; // 2 * T
    std::vector<double> cnn_input;  // 3 * T
};

inline FeatureBundle build_feature_bundle(std::span<const double> x,
                                          const FeatureSpec& spec = {}) {
    for (double v : x)
        if (!std::isfinite(v)) throw ValidationError("build_feature_bundle: non-finite sample");
    const std::size_t t = x.size();
    FeatureBundle fb;
    fb.series_length = t;
    fb.lstm_input.resize(2 * t);
    std::copy(x.begin(), x.end(), fb.lstm_input.begin());
    const auto fftch = fft_feature_channel(x);
    std::copy(fftch.begin(), fftch.end(), fb.lstm_input.begin() + static_cast<std::ptrdiff_t>(t));
    const auto wch = wavelet_channels(x, spec);
    fb.cnn_input.resize(3 * t);
    for (std::size_t c = 0; c < 3; ++c)
        std::copy(wch[c].begin(), wch[c].end(),
                  fb.cnn_input.begin() + static_cast<std::ptrdiff_t>(c * t));
    return fb;
}

} // namespace vibro::dsp
