#pragma once

// Pulse-sequence observables in the rotating-wave approximation. Every
// addressed transition is treated as an independent driven two-level system;
// there is no 9x9 time propagation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <variant>
#include <vector>

#include "nvodmr/constants.hpp"
#include "nvodmr/detail/levenberg_marquardt.hpp"
#include "nvodmr/error.hpp"
#include "nvodmr/spin_model.hpp"

namespace nvodmr::dynamics {

using spin::NvParameters;
using spin::StaticField;

struct DrivenTwoLevel {
    double detuning = 0.0;        ///< [Hz]
    double rabi_frequency = 0.0;  ///< Omega [Hz]
    double duration = 0.0;        ///< [s]

    void validate() const {
        nvodmr::detail::require_finite(detuning, "detuning");
        nvodmr::detail::require_non_negative(rabi_frequency, "Rabi frequency");
        nvodmr::detail::require_non_negative(duration, "duration");
    }
};

/// |Omega| = gamma_e B1 / sqrt(2) for a drive perpendicular to the NV axis.
inline double rabi_from_b1(const NvParameters& params, double b1) {
    nvodmr::detail::require_non_negative(b1, "b1");
    return params.gamma_e * b1 / std::numbers::sqrt2;
}

/// Inverse of rabi_from_b1.
inline double b1_from_rabi(const NvParameters& params, double rabi) {
    nvodmr::detail::require_non_negative(rabi, "Rabi frequency");
    return rabi * std::numbers::sqrt2 / params.gamma_e;
}

/// P_flip = Omega^2/(Omega^2 + Delta^2) sin^2(pi sqrt(Omega^2 + Delta^2) t).
inline double rabi_population(const DrivenTwoLevel& d) {
    d.validate();
    const double w2 = d.rabi_frequency * d.rabi_frequency;
    const double generalized2 = w2 + d.detuning * d.detuning;
    if (generalized2 == 0.0) {
        return 0.0;
    }
    const double s = std::sin(constants::pi * std::sqrt(generalized2) * d.duration);
    return w2 / generalized2 * s * s;
}

/// Resonant pi-pulse length 1/(2 Omega).
inline double pi_pulse_duration(double rabi) {
    nvodmr::detail::require_positive(rabi, "Rabi frequency");
    return 0.5 / rabi;
}

// ---------------------------------------------------------------------------
// Pulse sequences
// ---------------------------------------------------------------------------

struct LaserPulse {
    double duration = 0.0;  ///< readout + repolarisation [s]
};
struct MwPulse {
    double frequency = 0.0;  ///< [Hz]
    double b1 = 0.0;         ///< [T]
    double duration = 0.0;   ///< [s]
};
struct RfPulse {
    double frequency = 0.0;  ///< [Hz]
    double rabi = 0.0;       ///< [Hz]
    double duration = 0.0;   ///< [s]
};
struct Wait {
    double duration = 0.0;  ///< [s]
};

using PulseElement = std::variant<LaserPulse, MwPulse, RfPulse, Wait>;

struct PulseSequence {
    std::vector<PulseElement> elements;

    void validate() const {
        if (elements.empty()) {
            throw InvalidParameter("pulse sequence is empty");
        }
        for (const auto& e : elements) {
            std::visit([](const auto& p) { nvodmr::detail::require_non_negative(p.duration, "pulse duration"); }, e);
        }
    }

    [[nodiscard]] double total_duration() const {
        double t = 0.0;
        for (const auto& e : elements) {
            t += std::visit([](const auto& p) { return p.duration; }, e);
        }
        return t;
    }

    /// Element count of one kind, e.g. count<MwPulse>().
    template <class T>
    [[nodiscard]] std::size_t count() const {
        return static_cast<std::size_t>(std::count_if(
            elements.begin(), elements.end(), [](const auto& e) { return std::holds_alternative<T>(e); }));
    }
};

// ---------------------------------------------------------------------------
// Fluorescence and ODMR
// ---------------------------------------------------------------------------

struct FluorescenceModel {
    double rate_bright = 200e3;          ///< m_S = 0 [counts/s]
    double rate_dark = 130e3;            ///< m_S = +-1 during readout [counts/s]
    double readout_window = 300e-9;      ///< [s]
    double polarization_fidelity = 0.9;  ///< m_S = 0 population after the laser pulse

    void validate() const {
        nvodmr::detail::require_non_negative(rate_dark, "rate_dark");
        nvodmr::detail::require_finite(rate_bright, "rate_bright");
        if (!(rate_bright > rate_dark)) {
            throw InvalidParameter("rate_bright must exceed rate_dark");
        }
        nvodmr::detail::require_positive(readout_window, "readout window");
        nvodmr::detail::require_finite(polarization_fidelity, "polarization fidelity");
        if (polarization_fidelity < 0.5 || polarization_fidelity > 1.0) {
            throw InvalidParameter("polarization fidelity must lie in [0.5, 1]");
        }
    }
};

/// Electron-transition Rabi frequency scaled by the transition's matrix element
/// relative to a pure |0> <-> |+-1> transition (dipole weight 1/2).
inline double line_rabi(double bare_rabi, double dipole_weight) {
    return bare_rabi * std::sqrt(2.0 * dipole_weight);
}

/// Fluorescence after one MW pulse, normalised to the undriven level.
/// Nuclear sublevels are equally populated; within each sublevel the laser
/// leaves polarization_fidelity in m_S = 0 and the rest split evenly over +-1.
inline std::vector<double> odmr_spectrum(const NvParameters& params, const StaticField& field,
                                         const FluorescenceModel& fl, std::span<const double> mw_freq_grid,
                                         double b1, double pulse_duration) {
    fl.validate();
    nvodmr::detail::require_non_negative(pulse_duration, "pulse duration");
    if (mw_freq_grid.empty()) {
        throw InvalidParameter("frequency grid is empty");
    }
    for (std::size_t k = 1; k < mw_freq_grid.size(); ++k) {
        if (!(mw_freq_grid[k] > mw_freq_grid[k - 1])) {
            throw InvalidParameter("frequency grid must be strictly ascending");
        }
    }
    const double bare = rabi_from_b1(params, b1);
    const auto table = spin::transitions(params, field, spin::TransitionKind::electron);

    const double p0 = fl.polarization_fidelity;
    const double p_other = 0.5 * (1.0 - p0);
    const double reference = p0 * fl.rate_bright + (1.0 - p0) * fl.rate_dark;

    std::vector<double> signal(mw_freq_grid.size());
    for (std::size_t k = 0; k < mw_freq_grid.size(); ++k) {
        double fluorescence = 0.0;
        for (int m_i = -1; m_i <= 1; ++m_i) {
            double n0 = p0;
            for (int target : {-1, +1}) {
                const auto& line = spin::find_electron_line(table, target, m_i);
                const double flip = rabi_population(
                    {mw_freq_grid[k] - line.frequency, line_rabi(bare, line.dipole_weight), pulse_duration});
                n0 -= flip * (n0 - p_other);
            }
            fluorescence += (n0 * fl.rate_bright + (1.0 - n0) * fl.rate_dark) / 3.0;
        }
        signal[k] = fluorescence / reference;
    }
    return signal;
}

struct Dip {
    std::size_t index = 0;
    double frequency = 0.0;
    double depth = 0.0;  ///< 1 - signal
};

/// Local minima of a normalised spectrum deeper than min_depth and at least
/// relative_depth times the deepest one. The relative cut drops the sidelobes
/// of a pulsed lineshape.
inline std::vector<Dip> find_dips(std::span<const double> frequencies, std::span<const double> signal,
                                  double min_depth, double relative_depth = 0.5) {
    if (frequencies.size() != signal.size()) {
        throw InvalidParameter("frequency and signal lengths differ");
    }
    std::vector<Dip> candidates;
    double deepest = 0.0;
    for (std::size_t k = 1; k + 1 < signal.size(); ++k) {
        const double depth = 1.0 - signal[k];
        if (depth > min_depth && signal[k] < signal[k - 1] && signal[k] <= signal[k + 1]) {
            candidates.push_back({k, frequencies[k], depth});
            deepest = std::max(deepest, depth);
        }
    }
    std::vector<Dip> dips;
    for (const auto& d : candidates) {
        if (d.depth >= relative_depth * deepest) {
            dips.push_back(d);
        }
    }
    return dips;
}

// ---------------------------------------------------------------------------
// Rabi oscillations
// ---------------------------------------------------------------------------

inline std::vector<double> rabi_oscillation(double detuning, double rabi, std::span<const double> durations) {
    std::vector<double> out;
    out.reserve(durations.size());
    for (double t : durations) {
        out.push_back(rabi_population({detuning, rabi, t}));
    }
    return out;
}

struct RabiFit {
    double frequency = 0.0;  ///< [Hz]
    double amplitude = 0.0;  ///< signed; negative for a fluorescence decrease
    double offset = 0.0;
    double residual_norm = 0.0;
};

/// Fits y = offset + amplitude sin^2(pi f t). The starting frequency comes
/// from a least-squares periodogram over the Nyquist band of the samples.
inline RabiFit fit_rabi_oscillation(std::span<const double> times, std::span<const double> values) {
    if (times.size() != values.size() || times.size() < 8) {
        throw FitFailure("Rabi fit needs at least 8 paired samples");
    }
    const std::size_t n = times.size();
    const double span_t = times.back() - times.front();
    if (!(span_t > 0.0)) {
        throw FitFailure("Rabi fit needs ascending durations");
    }
    const double nyquist = 0.5 * static_cast<double>(n - 1) / span_t;

    double best_f = nyquist;
    double best_score = -std::numeric_limits<double>::infinity();
    const int n_grid = 20 * static_cast<int>(n);
    for (int g = 1; g <= n_grid; ++g) {
        const double f = nyquist * g / n_grid;
        // Linear least squares on (1, cos 2 pi f t).
        Eigen::MatrixXd a(n, 2);
        Eigen::VectorXd y(n);
        for (std::size_t k = 0; k < n; ++k) {
            a(k, 0) = 1.0;
            a(k, 1) = std::cos(2.0 * constants::pi * f * times[k]);
            y[k] = values[k];
        }
        const Eigen::Vector2d c = a.colPivHouseholderQr().solve(y);
        const double score = -(a * c - y).squaredNorm();
        if (score > best_score) {
            best_score = score;
            best_f = f;
        }
    }

    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    const double scale = std::max(*hi - *lo, 1e-300);

    const auto residual = [&](const Eigen::VectorXd& p) {
        Eigen::VectorXd r(n);
        for (std::size_t k = 0; k < n; ++k) {
            const double s = std::sin(constants::pi * p[0] * nyquist * times[k]);
            r[k] = (p[2] * scale + p[1] * scale * s * s - values[k]) / scale;
        }
        return r;
    };
    nvodmr::detail::LmResult best;
    for (double sign : {1.0, -1.0}) {
        Eigen::VectorXd p0(3);
        p0 << best_f / nyquist, sign, (sign > 0 ? *lo : *hi) / scale;
        auto res = nvodmr::detail::levenberg_marquardt(residual, p0);
        if (res.cost < best.cost) {
            best = std::move(res);
        }
    }
    if (!best.converged || !std::isfinite(best.cost)) {
        throw FitFailure("Rabi fit did not converge");
    }
    RabiFit fit;
    fit.frequency = std::abs(best.params[0]) * nyquist;
    fit.amplitude = best.params[1] * scale;
    fit.offset = best.params[2] * scale;
    fit.residual_norm = std::sqrt(2.0 * best.cost) * scale;
    return fit;
}

// ---------------------------------------------------------------------------
// Single-shot nuclear readout
// ---------------------------------------------------------------------------

struct ReadoutSettings {
    int n_repeats = 2000;
    int target_m_i = +1;      ///< nuclear sublevel addressed by the selective pi pulse
    int target_m_s = -1;      ///< electron transition used for the CNOT
    double rabi = 300e3;      ///< electron Rabi frequency of the selective pulse [Hz]
    double laser_duration = 3e-6;

    void validate() const {
        if (n_repeats < 1) {
            throw InvalidParameter("n_repeats must be >= 1");
        }
        if (target_m_i < -1 || target_m_i > 1 || (target_m_s != -1 && target_m_s != 1)) {
            throw InvalidParameter("invalid readout target");
        }
        nvodmr::detail::require_positive(rabi, "readout Rabi frequency");
        nvodmr::detail::require_non_negative(laser_duration, "laser duration");
    }

    /// The repeated (selective pi pulse, laser readout) sequence of one shot.
    [[nodiscard]] PulseSequence sequence(double line_frequency, double b1) const {
        PulseSequence seq;
        seq.elements.reserve(2 * static_cast<std::size_t>(n_repeats));
        for (int k = 0; k < n_repeats; ++k) {
            seq.elements.emplace_back(MwPulse{line_frequency, b1, pi_pulse_duration(rabi)});
            seq.elements.emplace_back(LaserPulse{laser_duration});
        }
        return seq;
    }
};

/// Probability that the selective pi pulse flips the electron for the given
/// actual nuclear state. Off-resonant lines are suppressed only through the
/// two-level formula.
inline double cnot_flip_probability(const NvParameters& params, const StaticField& field,
                                    const ReadoutSettings& s, int nuclear_state) {
    s.validate();
    if (nuclear_state < -1 || nuclear_state > 1) {
        throw InvalidParameter("nuclear state must be -1, 0 or +1");
    }
    const auto table = spin::transitions(params, field, spin::TransitionKind::electron);
    const auto& addressed = spin::find_electron_line(table, s.target_m_s, s.target_m_i);
    if (nuclear_state == s.target_m_i) {
        return 1.0;
    }
    const auto& actual = spin::find_electron_line(table, s.target_m_s, nuclear_state);
    return rabi_population({actual.frequency - addressed.frequency, s.rabi, pi_pulse_duration(s.rabi)});
}

/// Mean summed counts of one shot.
inline double expected_readout_counts(const NvParameters& params, const StaticField& field,
                                      const FluorescenceModel& fl, const ReadoutSettings& s,
                                      int nuclear_state) {
    fl.validate();
    const double flip = cnot_flip_probability(params, field, s, nuclear_state);
    const double rate = flip * fl.rate_dark + (1.0 - flip) * fl.rate_bright;
    return s.n_repeats * rate * fl.readout_window;
}

inline std::int64_t nuclear_readout_shot(const NvParameters& params, const StaticField& field,
                                         const FluorescenceModel& fl, const ReadoutSettings& s,
                                         int nuclear_state, std::mt19937_64& rng) {
    const double mean = expected_readout_counts(params, field, fl, s, nuclear_state);
    std::poisson_distribution<std::int64_t> counts(mean);
    return counts(rng);
}

inline std::int64_t nuclear_readout_shot(const NvParameters& params, const StaticField& field,
                                         const FluorescenceModel& fl, const ReadoutSettings& s,
                                         int nuclear_state, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return nuclear_readout_shot(params, field, fl, s, nuclear_state, rng);
}

/// Relative electron-nuclear flip-flop probability per readout, (b_ref/b)^2.
inline double nuclear_flip_probability_scaling(double b_ref, double b) {
    nvodmr::detail::require_positive(b_ref, "reference field");
    nvodmr::detail::require_positive(b, "field");
    const double r = b_ref / b;
    return r * r;
}

// ---------------------------------------------------------------------------
// NMR
// ---------------------------------------------------------------------------

struct NmrSettings {
    int m_s = 0;          ///< electron manifold during the RF pulse
    int initial_m_i = +1; ///< nuclear state prepared by the first single-shot measurement
};

/// Probability that the nuclear spin has left initial_m_i after an RF pulse.
/// rf_rabi is the nuclear Rabi frequency of a pure Delta m_I = 1 transition.
inline std::vector<double> nmr_scan(const NvParameters& params, const StaticField& field,
                                    std::span<const double> rf_grid, double rf_rabi, double pulse_duration,
                                    const NmrSettings& settings = {}) {
    if (rf_grid.empty()) {
        throw InvalidParameter("frequency grid is empty");
    }
    for (std::size_t k = 1; k < rf_grid.size(); ++k) {
        if (!(rf_grid[k] > rf_grid[k - 1])) {
            throw InvalidParameter("frequency grid must be strictly ascending");
        }
    }
    nvodmr::detail::require_non_negative(rf_rabi, "RF Rabi frequency");
    nvodmr::detail::require_non_negative(pulse_duration, "pulse duration");

    const auto table = spin::transitions(params, field, spin::TransitionKind::nuclear);
    std::vector<const spin::Transition*> lines;
    for (int other : {settings.initial_m_i - 1, settings.initial_m_i + 1}) {
        if (other >= -1 && other <= 1) {
            lines.push_back(&spin::find_nuclear_line(table, settings.m_s, settings.initial_m_i, other));
        }
    }

    std::vector<double> out(rf_grid.size());
    for (std::size_t k = 0; k < rf_grid.size(); ++k) {
        double p = 0.0;
        for (const auto* line : lines) {
            p += rabi_population({rf_grid[k] - line->frequency, line_rabi(rf_rabi, line->dipole_weight),
                                  pulse_duration});
        }
        out[k] = std::min(p, 1.0);
    }
    return out;
}

/// Nuclear Rabi oscillation on a single transition.
inline std::vector<double> nuclear_rabi(double rf_rabi, std::span<const double> durations, double detuning = 0.0) {
    return rabi_oscillation(detuning, rf_rabi, durations);
}

}  // namespace nvodmr::dynamics
