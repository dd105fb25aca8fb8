#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vibro/error.hpp"
#include "vibro/rng.hpp"

namespace vibro::synth {

// Parameter distributions for plate scenarios. Stiffness-related parameters
// are Normal, viscous damping is Uniform.
struct ScenarioDistribution {
    double mu_D = 300.0, sigma_D = 30.0;         // flexural rigidity [N*m]
    double mu_T = 100.0, sigma_T = 10.0;         // membrane tension [N/m]
    double mu_rho_h = 50.0, sigma_rho_h = 5.0;   // areal density [kg/m^2]
    double a_U = 10.0, b_U = 60.0;               // damping [N*s/m^3]
    int scenario_count_min = 1, scenario_count_max = 3;
    int impulse_count_min = 1, impulse_count_max = 3;
    double plate_span = 5.0; // nominal span [m]; wavenumbers k_n = n*pi/span
    int mode_count = 4;
    double impulse_window_fraction = 0.7; // impulses land in the leading part
    double impulse_amp_min = 0.5, impulse_amp_max = 1.5;

    void validate() const {
        if (sigma_D < 0 || sigma_T < 0 || sigma_rho_h < 0)
            throw ValidationError("distribution: sigmas must be >= 0");
        if (a_U > b_U) throw ValidationError("distribution: a_U must be <= b_U");
        if (mu_D <= 0 || mu_rho_h <= 0)
            throw ValidationError("distribution: mu_D and mu_rho_h must be positive");
        if (mu_T < 0) throw ValidationError("distribution: mu_T must be >= 0");
        if (a_U < 0) throw ValidationError("distribution: damping bounds must be >= 0");
        if (scenario_count_min < 1 || scenario_count_min > scenario_count_max)
            throw ValidationError("distribution: bad scenario_count range");
        if (impulse_count_min < 1 || impulse_count_min > impulse_count_max)
            throw ValidationError("distribution: bad impulse_count range");
        if (plate_span <= 0) throw ValidationError("distribution: plate_span must be positive");
        if (mode_count < 1) throw ValidationError("distribution: mode_count must be >= 1");
        if (impulse_window_fraction <= 0 || impulse_window_fraction > 1)
            throw ValidationError("distribution: impulse_window_fraction in (0, 1]");
        if (impulse_amp_min > impulse_amp_max)
            throw ValidationError("distribution: bad impulse amplitude range");
    }
};

// One sampled parameter set plus its impulse train.
struct PlateScenario {
    double flexural_rigidity = 1.0; // D
    double membrane_tension = 0.0;  // T
    double areal_density = 1.0;     // rho*h
    double damping = 0.0;           // K
    std::vector<double> impulse_times;      // [s], strictly increasing
    std::vector<double> impulse_amplitudes; // [N*s]
    int mode_count = 1;
    std::vector<double> wavenumbers; // [1/m]

    void validate(double duration) const {
        if (flexural_rigidity <= 0) throw ValidationError("scenario: D must be > 0");
        if (areal_density <= 0) throw ValidationError("scenario: rho*h must be > 0");
        if (damping < 0) throw ValidationError("scenario: K must be >= 0");
        if (membrane_tension < 0) throw ValidationError("scenario: T must be >= 0");
        if (mode_count < 1) throw ValidationError("scenario: mode_count must be >= 1");
        if (static_cast<int>(wavenumbers.size()) != mode_count)
            throw ValidationError("scenario: wavenumber count != mode_count");
        if (impulse_times.size() != impulse_amplitudes.size())
            throw ValidationError("scenario: impulse times/amplitudes length mismatch");
        for (std::size_t i = 0; i < impulse_times.size(); ++i) {
            if (impulse_times[i] < 0 || impulse_times[i] >= duration)
                throw ValidationError("scenario: impulse time outside [0, duration)");
            if (i > 0 && impulse_times[i] <= impulse_times[i - 1])
                throw ValidationError("scenario: impulse times must be strictly increasing");
        }
    }
};

// One reduced mode: a damped oscillator x'' + c x' + omega^2 x = gain * impulse.
struct Mode {
    double omega = 1.0;   // [rad/s]
    double damping = 0.0; // c = K / (rho*h) [1/s]
    double gain = 1.0;    // dimensionless modal participation
};

namespace detail {

// Rejection-resamples a Normal draw until positive. Degenerate distributions
// (mass essentially at or below zero) are rejected after 1000 draws.
inline double positive_normal(Rng& rng, double mu, double sigma, const char* name) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
        const double v = rng.normal(mu, sigma);
        if (v > 0.0) return v;
    }
    throw RuntimeError(std::string("sample_scenario: no positive draw for ") + name +
                       " after 1000 attempts (degenerate distribution)");
}

} // namespace detail

inline PlateScenario sample_scenario(const ScenarioDistribution& dist, Rng& rng,
                                     double duration = 2.5) {
    dist.validate();
    PlateScenario s;
    s.flexural_rigidity = detail::positive_normal(rng, dist.mu_D, dist.sigma_D, "D");
    s.membrane_tension =
        dist.mu_T == 0.0 && dist.sigma_T == 0.0
            ? 0.0
            : detail::positive_normal(rng, dist.mu_T, dist.sigma_T, "T");
    s.areal_density = detail::positive_normal(rng, dist.mu_rho_h, dist.sigma_rho_h, "rho_h");
    s.damping = rng.uniform(dist.a_U, dist.b_U);
    s.mode_count = dist.mode_count;
    s.wavenumbers.resize(static_cast<std::size_t>(dist.mode_count));
    for (int n = 0; n < dist.mode_count; ++n)
        s.wavenumbers[static_cast<std::size_t>(n)] =
            static_cast<double>(n + 1) * 3.141592653589793238462643383279502884 / dist.plate_span;

    const int n_imp = static_cast<int>(rng.uniform_int(dist.impulse_count_min, dist.impulse_count_max));
    s.impulse_times.resize(static_cast<std::size_t>(n_imp));
    s.impulse_amplitudes.resize(static_cast<std::size_t>(n_imp));
    for (auto& t : s.impulse_times) t = rng.uniform(0.0, dist.impulse_window_fraction * duration);
    std::sort(s.impulse_times.begin(), s.impulse_times.end());
    for (auto& a : s.impulse_amplitudes) a = rng.uniform(dist.impulse_amp_min, dist.impulse_amp_max);
    s.validate(duration);
    return s;
}

// PDE-to-ODE reduction: per wavenumber k, stiffness (D k^4 + T k^2) / rho_h
// and damping K / rho_h. Participation falls off with mode index.
inline std::vector<Mode> modal_reduction(const PlateScenario& s) {
    if (s.flexural_rigidity <= 0 || s.areal_density <= 0)
        throw ValidationError("modal_reduction: invalid scenario");
    std::vector<Mode> modes;
    modes.reserve(s.wavenumbers.size());
    for (std::size_t n = 0; n < s.wavenumbers.size(); ++n) {
        const double k = s.wavenumbers[n];
        const double k2 = k * k;
        const double stiffness =
            (s.flexural_rigidity * k2 * k2 + s.membrane_tension * k2) / s.areal_density;
        if (stiffness <= 0.0)
            throw ValidationError("modal_reduction: non-positive stiffness for mode " +
                                  std::to_string(n + 1));
        Mode m;
        m.omega = std::sqrt(stiffness);
        m.damping = s.damping / s.areal_density;
        m.gain = 1.0 / static_cast<double>(n + 1);
        modes.push_back(m);
    }
    return modes;
}

struct Impulse {
    double time = 0.0;
    double amplitude = 1.0;
};

// Fixed-step RK4 superposition of the per-mode impulse responses, sampled
// every `substeps` integrator steps. Impulses enter as instantaneous velocity
// jumps (exact delta response, no dt-dependent pulse energy). Unnormalized.
// velocity_out, when given, receives the superposed modal velocity at the
// same sample instants.
inline std::vector<double> integrate_modes(std::span<const Mode> modes,
                                           std::span<const Impulse> impulses,
                                           std::size_t series_length, double dt,
                                           int substeps = 4,
                                           std::vector<double>* velocity_out = nullptr) {
    if (dt <= 0.0) throw ValidationError("integrate_modes: dt must be > 0");
    if (modes.empty()) throw ValidationError("integrate_modes: no modes");
    if (substeps < 1) throw ValidationError("integrate_modes: substeps must be >= 1");
    const double duration = static_cast<double>(series_length) * dt;
    for (const auto& imp : impulses)
        if (imp.time < 0.0 || imp.time >= duration)
            throw ValidationError("integrate_modes: impulse time outside the window");

    const double h = dt / static_cast<double>(substeps);
    const std::size_t fine_steps = series_length * static_cast<std::size_t>(substeps);
    std::vector<double> out(series_length, 0.0);
    if (velocity_out) velocity_out->assign(series_length, 0.0);

    for (std::size_t mi = 0; mi < modes.size(); ++mi) {
        const Mode& m = modes[mi];
        const double w2 = m.omega * m.omega;
        const double c = m.damping;
        double x = 0.0, v = 0.0;
        std::size_t next_imp = 0;
        for (std::size_t step = 0; step < fine_steps; ++step) {
            while (next_imp < impulses.size() &&
                   static_cast<std::size_t>(std::llround(impulses[next_imp].time / h)) == step) {
                v += impulses[next_imp].amplitude * m.gain;
                ++next_imp;
            }
            if (step % static_cast<std::size_t>(substeps) == 0) {
                out[step / static_cast<std::size_t>(substeps)] += x;
                if (velocity_out) (*velocity_out)[step / static_cast<std::size_t>(substeps)] += v;
            }
            // RK4 on (x' = v, v' = -c v - w^2 x)
            const double k1x = v;
            const double k1v = -c * v - w2 * x;
            const double k2x = v + 0.5 * h * k1v;
            const double k2v = -c * (v + 0.5 * h * k1v) - w2 * (x + 0.5 * h * k1x);
            const double k3x = v + 0.5 * h * k2v;
            const double k3v = -c * (v + 0.5 * h * k2v) - w2 * (x + 0.5 * h * k2x);
            const double k4x = v + h * k3v;
            const double k4v = -c * (v + h * k3v) - w2 * (x + h * k3x);
            x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
            v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
            if (!std::isfinite(x) || !std::isfinite(v))
                throw RuntimeError("integrate_modes: non-finite state in mode " +
                                   std::to_string(mi + 1) + " at step " + std::to_string(step));
        }
    }
    return out;
}

inline void normalize_peak(std::vector<double>& w) {
    double peak = 0.0;
    for (double v : w) peak = std::max(peak, std::abs(v));
    if (peak > 0.0)
        for (double& v : w) v /= peak;
}

// Normalized impulse response: max |w| scaled to 1 when the series is nonzero.
inline std::vector<double> integrate_response(std::span<const Mode> modes,
                                              std::span<const Impulse> impulses,
                                              std::size_t series_length, double dt,
                                              int substeps = 4) {
    auto w = integrate_modes(modes, impulses, series_length, dt, substeps);
    normalize_peak(w);
    return w;
}

// Adds i.i.d. Gaussian noise per sample, independently per channel. Channel
// streams are drawn sequentially from the supplied generator, so a fixed seed
// fixes every byte.
inline std::vector<std::vector<float>> inject_noise(std::span<const float> clean,
                                                    double sigma_eps, std::size_t channels,
                                                    Rng& rng) {
    if (sigma_eps < 0.0) throw ValidationError("inject_noise: sigma_eps must be >= 0");
    if (channels < 1) throw ValidationError("inject_noise: need at least one channel");
    std::vector<std::vector<float>> out(channels);
    for (auto& ch : out) {
        ch.resize(clean.size());
        for (std::size_t i = 0; i < clean.size(); ++i)
            ch[i] = static_cast<float>(static_cast<double>(clean[i]) +
                                       (sigma_eps == 0.0 ? 0.0 : rng.normal(0.0, sigma_eps)));
    }
    return out;
}

} // namespace vibro::synth
