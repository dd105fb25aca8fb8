#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "vibro/error.hpp"

namespace vibro::dsp {

inline constexpr double kPi = 3.141592653589793238462643383279502884;

// Complex spectrum of a real series: bins[k] = sum_n x[n] e^{-2*pi*i*k*n/N}.
struct Spectrum {
    std::vector<std::complex<double>> bins;
    double sample_rate = 0.0;
};

namespace detail {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

// In-place iterative radix-2 Cooley-Tukey. sign = -1 forward, +1 inverse
// (inverse leaves the 1/N scaling to the caller).
inline void fft_pow2(std::vector<std::complex<double>>& a, int sign) {
    const std::size_t n = a.size();
    if (n <= 1) return;
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = sign * 2.0 * kPi / static_cast<double>(len);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t j = 0; j < len / 2; ++j) {
                const auto u = a[i + j];
                const auto v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

// Bluestein's chirp-z transform: exact DFT for arbitrary N via a power-of-two
// convolution.
inline void dft_bluestein(std::vector<std::complex<double>>& a, int sign) {
    const std::size_t n = a.size();
    const std::size_t m = next_pow2(2 * n - 1);
    std::vector<std::complex<double>> chirp(n);
    for (std::size_t k = 0; k < n; ++k) {
        // angle = pi * k^2 / n, computed mod 2n to keep the argument small
        const std::size_t k2 = (k * k) % (2 * n);
        const double ang = sign * kPi * static_cast<double>(k2) / static_cast<double>(n);
        chirp[k] = {std::cos(ang), std::sin(ang)};
    }
    std::vector<std::complex<double>> fa(m), fb(m);
    for (std::size_t k = 0; k < n; ++k) fa[k] = a[k] * chirp[k];
    fb[0] = std::conj(chirp[0]);
    for (std::size_t k = 1; k < n; ++k) fb[k] = fb[m - k] = std::conj(chirp[k]);
    fft_pow2(fa, -1);
    fft_pow2(fb, -1);
    for (std::size_t k = 0; k < m; ++k) fa[k] *= fb[k];
    fft_pow2(fa, +1);
    const double scale = 1.0 / static_cast<double>(m);
    for (std::size_t k = 0; k < n; ++k) a[k] = fa[k] * scale * chirp[k];
}

inline void dft_inplace(std::vector<std::complex<double>>& a, int sign) {
    if (is_pow2(a.size()))
        fft_pow2(a, sign);
    else
        dft_bluestein(a, sign);
}

} // namespace detail

// Forward DFT of a real series, any length >= 1. Power-of-two lengths take
// the radix-2 path, others go through Bluestein.
inline Spectrum dft_forward(std::span<const double> x, double sample_rate = 0.0) {
    if (x.empty()) throw ValidationError("dft_forward: empty input");
    for (double v : x)
        if (!std::isfinite(v)) throw ValidationError("dft_forward: non-finite input sample");
    Spectrum s;
    s.sample_rate = sample_rate;
    s.bins.assign(x.begin(), x.end());
    detail::dft_inplace(s.bins, -1);
    return s;
}

// Inverse DFT back to a real series (imaginary parts discarded).
inline std::vector<double> dft_inverse(const Spectrum& s) {
    if (s.bins.empty()) throw ValidationError("dft_inverse: empty spectrum");
    auto a = s.bins;
    detail::dft_inplace(a, +1);
    std::vector<double> x(a.size());
    const double scale = 1.0 / static_cast<double>(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) x[i] = a[i].real() * scale;
    return x;
}

} // namespace vibro::dsp
