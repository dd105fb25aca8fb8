#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "vibro/error.hpp"
#include "vibro/neural/params.hpp"

namespace vibro::neural {

namespace detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

} // namespace detail

// Per-direction activations kept for backpropagation through time.
// gates holds [i f g o] per step (post-activation), step-major.
struct LstmDirCache {
    std::vector<double> gates;  // T x 4H
    std::vector<double> cell;   // T x H
    std::vector<double> tanh_c; // T x H
    std::vector<double> h;      // T x H
};

// One direction over the sequence. x is channel-major (inputs x T);
// step s reads x at time index `reversed ? T-1-s : s`. Hidden states start
// at zero. Throws if any activation goes non-finite.
inline void lstm_dir_forward(std::span<const double> x, std::size_t inputs, std::size_t t,
                             std::span<const double> wx, std::span<const double> wh,
                             std::span<const double> bias, std::size_t hidden, bool reversed,
                             LstmDirCache& cache) {
    const std::size_t h4 = 4 * hidden;
    if (wx.size() != h4 * inputs || wh.size() != h4 * hidden || bias.size() != h4)
        throw ValidationError("lstm: parameter shape mismatch");
    cache.gates.assign(t * h4, 0.0);
    cache.cell.assign(t * hidden, 0.0);
    cache.tanh_c.assign(t * hidden, 0.0);
    cache.h.assign(t * hidden, 0.0);

    std::vector<double> z(h4), xt(inputs);
    std::vector<double> h_prev(hidden, 0.0), c_prev(hidden, 0.0);
    for (std::size_t s = 0; s < t; ++s) {
        const std::size_t time = reversed ? t - 1 - s : s;
        for (std::size_t ci = 0; ci < inputs; ++ci) xt[ci] = x[ci * t + time];
        for (std::size_t r = 0; r < h4; ++r) {
            const double* wxr = wx.data() + r * inputs;
            const double* whr = wh.data() + r * hidden;
            double acc = bias[r];
            for (std::size_t ci = 0; ci < inputs; ++ci) acc += wxr[ci] * xt[ci];
            for (std::size_t k = 0; k < hidden; ++k) acc += whr[k] * h_prev[k];
            z[r] = acc;
        }
        double* gates = cache.gates.data() + s * h4;
        double* cell = cache.cell.data() + s * hidden;
        double* tanhc = cache.tanh_c.data() + s * hidden;
        double* hout = cache.h.data() + s * hidden;
        for (std::size_t k = 0; k < hidden; ++k) {
            const double ig = detail::sigmoid(z[k]);
            const double fg = detail::sigmoid(z[hidden + k]);
            const double gg = std::tanh(z[2 * hidden + k]);
            const double og = detail::sigmoid(z[3 * hidden + k]);
            const double c = fg * c_prev[k] + ig * gg;
            const double tc = std::tanh(c);
            gates[k] = ig;
            gates[hidden + k] = fg;
            gates[2 * hidden + k] = gg;
            gates[3 * hidden + k] = og;
            cell[k] = c;
            tanhc[k] = tc;
            hout[k] = og * tc;
            if (!std::isfinite(c) || !std::isfinite(hout[k]))
                throw RuntimeError("lstm: non-finite state at step " + std::to_string(s));
        }
        std::copy(hout, hout + hidden, h_prev.begin());
        std::copy(cell, cell + hidden, c_prev.begin());
    }
}

// BPTT for one direction. dh is the per-step output gradient (T x H in cache
// step order). Accumulates parameter gradients; input gradients are not
// needed (the branch input is data, not a trained tensor).
inline void lstm_dir_backward(std::span<const double> x, std::size_t inputs, std::size_t t,
                              std::span<const double> wx, std::span<const double> wh,
                              std::size_t hidden, bool reversed, const LstmDirCache& cache,
                              std::span<const double> dh_steps, std::span<double> dwx,
                              std::span<double> dwh, std::span<double> db) {
    const std::size_t h4 = 4 * hidden;
    std::vector<double> dh_next(hidden, 0.0), dc_next(hidden, 0.0);
    std::vector<double> dz(h4), xt(inputs);
    for (std::size_t s = t; s-- > 0;) {
        const std::size_t time = reversed ? t - 1 - s : s;
        for (std::size_t ci = 0; ci < inputs; ++ci) xt[ci] = x[ci * t + time];
        const double* gates = cache.gates.data() + s * h4;
        const double* tanhc = cache.tanh_c.data() + s * hidden;
        const double* c_prev = s > 0 ? cache.cell.data() + (s - 1) * hidden : nullptr;
        const double* h_prev = s > 0 ? cache.h.data() + (s - 1) * hidden : nullptr;

        for (std::size_t k = 0; k < hidden; ++k) {
            const double ig = gates[k], fg = gates[hidden + k], gg = gates[2 * hidden + k],
                         og = gates[3 * hidden + k];
            const double dh = dh_steps[s * hidden + k] + dh_next[k];
            const double tc = tanhc[k];
            const double dc = dh * og * (1.0 - tc * tc) + dc_next[k];
            const double cp = c_prev ? c_prev[k] : 0.0;
            dz[k] = dc * gg * ig * (1.0 - ig);                  // input gate
            dz[hidden + k] = dc * cp * fg * (1.0 - fg);         // forget gate
            dz[2 * hidden + k] = dc * ig * (1.0 - gg * gg);     // candidate
            dz[3 * hidden + k] = dh * tc * og * (1.0 - og);     // output gate
            dc_next[k] = dc * fg;
        }
        std::fill(dh_next.begin(), dh_next.end(), 0.0);
        for (std::size_t r = 0; r < h4; ++r) {
            const double g = dz[r];
            if (g == 0.0) continue;
            db[r] += g;
            double* dwxr = dwx.data() + r * inputs;
            for (std::size_t ci = 0; ci < inputs; ++ci) dwxr[ci] += g * xt[ci];
            double* dwhr = dwh.data() + r * hidden;
            const double* whr = wh.data() + r * hidden;
            if (h_prev) {
                for (std::size_t k = 0; k < hidden; ++k) {
                    dwhr[k] += g * h_prev[k];
                    dh_next[k] += whr[k] * g;
                }
            } else {
                for (std::size_t k = 0; k < hidden; ++k) dh_next[k] += whr[k] * g;
            }
        }
    }
}

} // namespace vibro::neural
