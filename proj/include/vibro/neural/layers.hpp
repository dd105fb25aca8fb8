#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "vibro/error.hpp"

namespace vibro::neural {

enum class Activation { linear, relu };

// y = act(W x + b); writes into y (resized, capacity reused). W is
// rows x cols row-major. pre_out, when given, receives the pre-activation.
inline void dense_forward_into(std::span<const double> x, std::span<const double> w,
                               std::span<const double> bias, Activation act,
                               std::vector<double>& y, std::vector<double>* pre_out = nullptr) {
    const std::size_t rows = bias.size();
    const std::size_t cols = x.size();
    if (w.size() != rows * cols) throw ValidationError("dense_forward: shape mismatch");
    y.resize(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* wr = w.data() + r * cols;
        double acc = bias[r];
        for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * x[c];
        y[r] = acc;
    }
    if (pre_out) *pre_out = y;
    if (act == Activation::relu)
        for (auto& v : y) v = std::max(v, 0.0);
}

inline std::vector<double> dense_forward(std::span<const double> x, std::span<const double> w,
                                         std::span<const double> bias, Activation act,
                                         std::vector<double>* pre_out = nullptr) {
    std::vector<double> y;
    dense_forward_into(x, w, bias, act, y, pre_out);
    return y;
}

// Backward of dense_forward; dy is the gradient at the activation output, pre
// the cached pre-activation. Accumulates into dw/db, writes dx.
inline void dense_backward_into(std::span<const double> x, std::span<const double> w,
                                std::span<const double> pre, std::span<const double> dy,
                                Activation act, std::span<double> dw, std::span<double> db,
                                std::vector<double>& dx) {
    const std::size_t rows = dy.size();
    const std::size_t cols = x.size();
    dx.assign(cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        double g = dy[r];
        if (act == Activation::relu && pre[r] <= 0.0) g = 0.0;
        if (g == 0.0) continue;
        db[r] += g;
        const double* wr = w.data() + r * cols;
        double* dwr = dw.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) {
            dwr[c] += g * x[c];
            dx[c] += wr[c] * g;
        }
    }
}

inline std::vector<double> dense_backward(std::span<const double> x, std::span<const double> w,
                                          std::span<const double> pre, std::span<const double> dy,
                                          Activation act, std::span<double> dw,
                                          std::span<double> db) {
    std::vector<double> dx;
    dense_backward_into(x, w, pre, dy, act, dw, db, dx);
    return dx;
}

// Same-padded cross-correlation on channel-major data (C_in x T -> C_out x T).
// Kernels are C_out x (C_in * K) row-major, odd K.
inline void conv1d_same_into(std::span<const double> x, std::size_t c_in, std::size_t t,
                             std::span<const double> kernels, std::span<const double> bias,
                             std::size_t k, std::vector<double>& y) {
    const std::size_t c_out = bias.size();
    if (k % 2 == 0) throw ValidationError("conv1d_same: kernel width must be odd");
    if (x.size() != c_in * t || kernels.size() != c_out * c_in * k)
        throw ValidationError("conv1d_same: shape mismatch");
    const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(k / 2);
    y.assign(c_out * t, 0.0);
    for (std::size_t co = 0; co < c_out; ++co) {
        for (std::size_t ci = 0; ci < c_in; ++ci) {
            const double* kern = kernels.data() + (co * c_in + ci) * k;
            const double* xin = x.data() + ci * t;
            double* yout = y.data() + co * t;
            for (std::size_t i = 0; i < t; ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < k; ++j) {
                    const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(i) +
                                               static_cast<std::ptrdiff_t>(j) - half;
                    if (src >= 0 && src < static_cast<std::ptrdiff_t>(t)) acc += kern[j] * xin[src];
                }
                yout[i] += acc;
            }
        }
        double* yout = y.data() + co * t;
        for (std::size_t i = 0; i < t; ++i) yout[i] += bias[co];
    }
}

inline std::vector<double> conv1d_same(std::span<const double> x, std::size_t c_in, std::size_t t,
                                       std::span<const double> kernels, std::span<const double> bias,
                                       std::size_t k) {
    std::vector<double> y;
    conv1d_same_into(x, c_in, t, kernels, bias, k, y);
    return y;
}

// Backward of conv1d_same: dy is C_out x T; accumulates dkernels/dbias,
// writes dx (C_in x T).
inline void conv1d_same_backward_into(std::span<const double> x, std::size_t c_in, std::size_t t,
                                      std::span<const double> kernels, std::size_t k,
                                      std::span<const double> dy, std::span<double> dkernels,
                                      std::span<double> dbias, std::vector<double>& dx) {
    const std::size_t c_out = dbias.size();
    const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(k / 2);
    dx.assign(c_in * t, 0.0);
    for (std::size_t co = 0; co < c_out; ++co) {
        const double* dyo = dy.data() + co * t;
        for (std::size_t i = 0; i < t; ++i) dbias[co] += dyo[i];
        for (std::size_t ci = 0; ci < c_in; ++ci) {
            const double* kern = kernels.data() + (co * c_in + ci) * k;
            double* dkern = dkernels.data() + (co * c_in + ci) * k;
            const double* xin = x.data() + ci * t;
            double* dxin = dx.data() + ci * t;
            for (std::size_t i = 0; i < t; ++i) {
                const double g = dyo[i];
                if (g == 0.0) continue;
                for (std::size_t j = 0; j < k; ++j) {
                    const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(i) +
                                               static_cast<std::ptrdiff_t>(j) - half;
                    if (src >= 0 && src < static_cast<std::ptrdiff_t>(t)) {
                        dkern[j] += g * xin[src];
                        dxin[src] += g * kern[j];
                    }
                }
            }
        }
    }
}

inline std::vector<double> conv1d_same_backward(std::span<const double> x, std::size_t c_in,
                                                std::size_t t, std::span<const double> kernels,
                                                std::size_t k, std::span<const double> dy,
                                                std::span<double> dkernels, std::span<double> dbias) {
    std::vector<double> dx;
    conv1d_same_backward_into(x, c_in, t, kernels, k, dy, dkernels, dbias, dx);
    return dx;
}

// Non-overlapping max pooling with a final partial window. argmax records the
// first maximal index, which also pins the backward tie-break.
inline void maxpool1d_into(std::span<const double> x, std::size_t channels, std::size_t t,
                           std::size_t width, std::vector<double>& y,
                           std::vector<std::size_t>* argmax_out = nullptr) {
    if (width < 1) throw ValidationError("maxpool1d: width must be >= 1");
    const std::size_t out_t = (t + width - 1) / width;
    y.resize(channels * out_t);
    if (argmax_out) argmax_out->assign(channels * out_t, 0);
    for (std::size_t c = 0; c < channels; ++c) {
        const double* xin = x.data() + c * t;
        for (std::size_t o = 0; o < out_t; ++o) {
            const std::size_t lo = o * width;
            const std::size_t hi = std::min(t, lo + width);
            std::size_t best = lo;
            for (std::size_t i = lo + 1; i < hi; ++i)
                if (xin[i] > xin[best]) best = i;
            y[c * out_t + o] = xin[best];
            if (argmax_out) (*argmax_out)[c * out_t + o] = best;
        }
    }
}

inline std::vector<double> maxpool1d(std::span<const double> x, std::size_t channels,
                                     std::size_t t, std::size_t width,
                                     std::vector<std::size_t>* argmax_out = nullptr) {
    std::vector<double> y;
    maxpool1d_into(x, channels, t, width, y, argmax_out);
    return y;
}

inline void maxpool1d_backward_into(std::span<const double> dy, std::size_t channels,
                                    std::size_t t, std::size_t width,
                                    std::span<const std::size_t> argmax, std::vector<double>& dx) {
    const std::size_t out_t = (t + width - 1) / width;
    dx.assign(channels * t, 0.0);
    for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t o = 0; o < out_t; ++o)
            dx[c * t + argmax[c * out_t + o]] += dy[c * out_t + o];
}

inline std::vector<double> maxpool1d_backward(std::span<const double> dy, std::size_t channels,
                                              std::size_t t, std::size_t width,
                                              std::span<const std::size_t> argmax) {
    std::vector<double> dx;
    maxpool1d_backward_into(dy, channels, t, width, argmax, dx);
    return dx;
}

} // namespace vibro::neural
