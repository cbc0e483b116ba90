#pragma once

// Closed-form design formulas for the E-band microwave structures: cylindrical
// cavity modes, conductor losses, loss budgets, power-to-field efficiencies,
// a first-order half-wave CPW estimate, and resonance-curve fitting.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nvodmr/constants.hpp"
#include "nvodmr/detail/levenberg_marquardt.hpp"
#include "nvodmr/error.hpp"

namespace nvodmr::resonator {

// ---------------------------------------------------------------------------
// Bessel roots
// ---------------------------------------------------------------------------

namespace detail {

inline double bessel_j(int n, double x) { return std::cyl_bessel_j(static_cast<double>(n), x); }

inline double bessel_j_prime(int n, double x) {
    if (n == 0) {
        return -bessel_j(1, x);
    }
    return 0.5 * (bessel_j(n - 1, x) - bessel_j(n + 1, x));
}

template <class F>
double bisect_root(F&& f, double lo, double hi) {
    double f_lo = f(lo);
    for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
        const double mid = 0.5 * (lo + hi);
        const double f_mid = f(mid);
        if ((f_mid < 0.0) == (f_lo < 0.0)) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

/// m-th positive zero (m >= 1) of f on (0, inf), found by scanning.
template <class F>
double nth_positive_zero(F&& f, int m) {
    constexpr double step = 0.01;
    double x = 1e-3;
    double fx = f(x);
    int found = 0;
    while (x < 200.0) {
        const double next = x + step;
        const double f_next = f(next);
        if (fx == 0.0 || (fx < 0.0) != (f_next < 0.0)) {
            if (++found == m) {
                return fx == 0.0 ? x : bisect_root(f, x, next);
            }
        }
        x = next;
        fx = f_next;
    }
    throw InvalidParameter("Bessel root index out of supported range");
}

}  // namespace detail

inline constexpr int max_bessel_order = 10;
inline constexpr int max_root_index = 10;

/// m-th positive root of J_n.
inline double bessel_zero(int n, int m) {
    if (n < 0 || n > max_bessel_order || m < 1 || m > max_root_index) {
        throw InvalidParameter("unsupported Bessel root J_" + std::to_string(n) + " #" + std::to_string(m));
    }
    return detail::nth_positive_zero([n](double x) { return detail::bessel_j(n, x); }, m);
}

/// m-th positive root of J_n' (x = 0 excluded).
inline double bessel_prime_zero(int n, int m) {
    if (n < 0 || n > max_bessel_order || m < 1 || m > max_root_index) {
        throw InvalidParameter("unsupported Bessel root J'_" + std::to_string(n) + " #" + std::to_string(m));
    }
    return detail::nth_positive_zero([n](double x) { return detail::bessel_j_prime(n, x); }, m);
}

// ---------------------------------------------------------------------------
// Cylindrical cavity
// ---------------------------------------------------------------------------

enum class ModeFamily { TM, TE };

struct CavityMode {
    ModeFamily family = ModeFamily::TM;
    int n = 1;  ///< azimuthal index
    int m = 1;  ///< radial index (root number)
    int l = 0;  ///< axial index

    void validate() const {
        if (n < 0 || n > max_bessel_order || m < 1 || m > max_root_index || l < 0) {
            throw InvalidParameter("unsupported cavity mode indices");
        }
        if (family == ModeFamily::TE && l < 1) {
            throw InvalidParameter("TE modes of a closed cylinder need an axial index >= 1");
        }
    }

    [[nodiscard]] std::string name() const {
        return std::string(family == ModeFamily::TM ? "TM" : "TE") + std::to_string(n) +
               std::to_string(m) + std::to_string(l);
    }

    [[nodiscard]] double radial_root() const {
        return family == ModeFamily::TM ? bessel_zero(n, m) : bessel_prime_zero(n, m);
    }
};

/// Parses names like "TM110" or "te011" (single-digit indices).
inline CavityMode parse_mode(std::string_view text) {
    if (text.size() != 5) {
        throw InvalidParameter("mode must look like TM110 or TE011, got '" + std::string(text) + "'");
    }
    auto upper = [](char c) { return static_cast<char>(c >= 'a' && c <= 'z' ? c - 32 : c); };
    CavityMode mode;
    const std::string fam{upper(text[0]), upper(text[1])};
    if (fam == "TM") {
        mode.family = ModeFamily::TM;
    } else if (fam == "TE") {
        mode.family = ModeFamily::TE;
    } else {
        throw InvalidParameter("mode family must be TM or TE");
    }
    for (std::size_t k = 2; k < 5; ++k) {
        if (text[k] < '0' || text[k] > '9') {
            throw InvalidParameter("mode indices must be digits");
        }
    }
    mode.n = text[2] - '0';
    mode.m = text[3] - '0';
    mode.l = text[4] - '0';
    mode.validate();
    return mode;
}

struct CylindricalCavity {
    double radius = 2.4e-3;                                   ///< a [m]
    double length = 1.0e-3;                                   ///< d [m]
    double conductor_resistivity = constants::copper_resistivity;  ///< [Ohm m]
    CavityMode mode{};

    void validate() const {
        nvodmr::detail::require_positive(radius, "cavity radius");
        nvodmr::detail::require_positive(length, "cavity length");
        nvodmr::detail::require_positive(conductor_resistivity, "conductor resistivity");
        mode.validate();
    }

    [[nodiscard]] double aspect_ratio() const { return 2.0 * radius / length; }
    [[nodiscard]] double volume() const { return constants::pi * radius * radius * length; }
};

inline double cavity_frequency(const CylindricalCavity& c) {
    c.validate();
    const double kr = c.mode.radial_root() / c.radius;
    const double kz = c.mode.l * constants::pi / c.length;
    return constants::speed_of_light * std::sqrt(kr * kr + kz * kz) / (2.0 * constants::pi);
}

inline double skin_depth(double resistivity, double frequency) {
    nvodmr::detail::require_positive(resistivity, "resistivity");
    nvodmr::detail::require_positive(frequency, "frequency");
    return std::sqrt(2.0 * resistivity / (2.0 * constants::pi * frequency * constants::mu0));
}

/// Surface resistance rho / delta [Ohm].
inline double surface_resistance(double resistivity, double frequency) {
    return resistivity / skin_depth(resistivity, frequency);
}

/// Conductor-loss quality factor of a TM_nm0 mode: k a eta / (2 R_s (1 + a/d)).
inline double cavity_conductor_q(const CylindricalCavity& c) {
    c.validate();
    if (c.mode.family != ModeFamily::TM || c.mode.l != 0) {
        throw InvalidParameter("conductor Q is implemented for TM_nm0 modes only");
    }
    const double f = cavity_frequency(c);
    const double eta = constants::mu0 * constants::speed_of_light;
    const double rs = surface_resistance(c.conductor_resistivity, f);
    return c.mode.radial_root() * eta / (2.0 * rs * (1.0 + c.radius / c.length));
}

/// (Q_c/V) at aspect1 divided by (Q_c/V) at aspect2, both at radius a, where
/// aspect = 2a/d. For TM_nm0 modes this reduces to (d2 + a)/(d1 + a).
inline double cavity_q_over_v_ratio(double aspect1, double aspect2, double radius) {
    nvodmr::detail::require_positive(aspect1, "aspect1");
    nvodmr::detail::require_positive(aspect2, "aspect2");
    nvodmr::detail::require_positive(radius, "radius");
    const double d1 = 2.0 * radius / aspect1;
    const double d2 = 2.0 * radius / aspect2;
    return (d2 + radius) / (d1 + radius);
}

// ---------------------------------------------------------------------------
// Efficiencies
// ---------------------------------------------------------------------------

inline constexpr double default_gamma_e = 28.03e9;  // Hz/T

/// C_mag [T/sqrt(W)] -> C_Rabi [Hz/sqrt(W)], Omega = gamma_e B1 / sqrt(2).
inline double rabi_efficiency_from_field(double c_mag, double gamma_e = default_gamma_e) {
    nvodmr::detail::require_non_negative(c_mag, "field efficiency");
    nvodmr::detail::require_positive(gamma_e, "gamma_e");
    return gamma_e * c_mag / std::numbers::sqrt2;
}

/// C_Rabi [Hz/sqrt(W)] -> C_mag [T/sqrt(W)].
inline double field_efficiency_from_rabi(double c_rabi, double gamma_e = default_gamma_e) {
    nvodmr::detail::require_non_negative(c_rabi, "Rabi efficiency");
    nvodmr::detail::require_positive(gamma_e, "gamma_e");
    return c_rabi * std::numbers::sqrt2 / gamma_e;
}

/// C_Rabi = Omega / sqrt(P) from a measured Rabi frequency [Hz] and power [W].
inline double efficiency_from_measurement(double rabi, double power) {
    nvodmr::detail::require_non_negative(rabi, "Rabi frequency");
    nvodmr::detail::require_positive(power, "microwave power");
    return rabi / std::sqrt(power);
}

// ---------------------------------------------------------------------------
// Loss budget
// ---------------------------------------------------------------------------

struct LossBudget {
    std::optional<double> q_conductive;
    std::optional<double> q_dielectric;
    std::optional<double> q_radiative;

    [[nodiscard]] std::vector<double> channels() const {
        std::vector<double> out;
        for (const auto& q : {q_conductive, q_dielectric, q_radiative}) {
            if (q) {
                out.push_back(*q);
            }
        }
        return out;
    }
};

/// 1/Q = sum over present channels of 1/Q_i.
inline double combine_quality_factors(const LossBudget& budget) {
    const auto qs = budget.channels();
    if (qs.empty()) {
        throw InvalidParameter("loss budget needs at least one channel");
    }
    double inverse = 0.0;
    for (double q : qs) {
        nvodmr::detail::require_positive(q, "quality factor");
        inverse += 1.0 / q;
    }
    return 1.0 / inverse;
}

// ---------------------------------------------------------------------------
// CPW resonator
// ---------------------------------------------------------------------------

inline constexpr double diamond_permittivity = 5.7;

struct CpwResonator {
    double resonator_length = 1085e-6;   ///< L_R [m]
    double waist_width = 85e-6;          ///< [m]
    double dielectric_constant = 2.9;    ///< substrate epsilon_r
    double dielectric_thickness = 100e-6;///< [m]
    double superstrate_constant = 1.0;   ///< epsilon_r above the conductors (air = 1)

    static CpwResonator wide_waist() { return {1085e-6, 85e-6, 2.9, 100e-6, 1.0}; }
    static CpwResonator narrow_waist() { return {1014e-6, 3e-6, 2.9, 100e-6, 1.0}; }

    void validate() const {
        nvodmr::detail::require_positive(resonator_length, "resonator length");
        nvodmr::detail::require_positive(waist_width, "waist width");
        nvodmr::detail::require_positive(dielectric_thickness, "dielectric thickness");
        nvodmr::detail::require_finite(dielectric_constant, "dielectric constant");
        nvodmr::detail::require_finite(superstrate_constant, "superstrate constant");
        if (dielectric_constant < 1.0 || superstrate_constant < 1.0) {
            throw InvalidParameter("relative permittivities must be >= 1");
        }
    }

    [[nodiscard]] double effective_permittivity() const {
        return 0.5 * (dielectric_constant + superstrate_constant);
    }
};

/// First-order half-wave estimate c0 / (2 L_R sqrt(eps_eff)). Ignores the
/// taper, patch antenna and coupling; expect agreement with full-wave values
/// only to within a factor of about 1.5.
inline double cpw_halfwave_estimate(const CpwResonator& r) {
    r.validate();
    return constants::speed_of_light / (2.0 * r.resonator_length * std::sqrt(r.effective_permittivity()));
}

// ---------------------------------------------------------------------------
// Resonance curve fitting
// ---------------------------------------------------------------------------

struct ResonanceSample {
    double frequency = 0.0;  ///< [Hz]
    double response = 0.0;   ///< Rabi frequency [Hz] or B1 proxy
};

using ResonanceCurve = std::vector<ResonanceSample>;

/// Field-amplitude Lorentzian A / sqrt(1 + 4 Q^2 (f/f0 - 1)^2).
inline double amplitude_lorentzian(double f, double f0, double q, double amplitude) {
    const double x = f / f0 - 1.0;
    return amplitude / std::sqrt(1.0 + 4.0 * q * q * x * x);
}

struct LorentzianFit {
    double f0 = 0.0;
    double q = 0.0;
    double amplitude = 0.0;
    double residual_norm = 0.0;
    int iterations = 0;
};

inline LorentzianFit fit_lorentzian(std::span<const ResonanceSample> curve) {
    if (curve.size() < 5) {
        throw FitFailure("need at least 5 samples, got " + std::to_string(curve.size()));
    }
    for (std::size_t k = 0; k < curve.size(); ++k) {
        nvodmr::detail::require_finite(curve[k].frequency, "frequency");
        nvodmr::detail::require_finite(curve[k].response, "response");
        if (k > 0 && !(curve[k].frequency > curve[k - 1].frequency)) {
            throw FitFailure("frequencies must be strictly ascending");
        }
    }
    const auto [min_it, max_it] = std::minmax_element(
        curve.begin(), curve.end(), [](const auto& a, const auto& b) { return a.response < b.response; });
    const double peak = max_it->response;
    const double floor = min_it->response;
    if (!(peak > 0.0) || peak - floor <= 1e-9 * std::abs(peak)) {
        throw FitFailure("curve has no peak (max " + std::to_string(peak) + ", min " +
                         std::to_string(floor) + ")");
    }

    // Work in units of the peak sample so the solver sees O(1) numbers.
    const double f_ref = max_it->frequency;
    Eigen::VectorXd x(curve.size()), y(curve.size());
    for (std::size_t k = 0; k < curve.size(); ++k) {
        x[k] = curve[k].frequency / f_ref;
        y[k] = curve[k].response / peak;
    }
    const auto residual = [&](const Eigen::VectorXd& p) {
        Eigen::VectorXd r(x.size());
        for (Eigen::Index k = 0; k < x.size(); ++k) {
            r[k] = amplitude_lorentzian(x[k], p[0], p[1], p[2]) - y[k];
        }
        return r;
    };

    nvodmr::detail::LmResult best;
    for (double q0 : {10.0, 30.0, 100.0, 300.0}) {
        Eigen::VectorXd p0(3);
        p0 << 1.0, q0, 1.0;
        auto res = nvodmr::detail::levenberg_marquardt(residual, p0);
        if (res.cost < best.cost) {
            best = std::move(res);
        }
    }

    const double f0 = best.params.size() == 3 ? best.params[0] * f_ref : 0.0;
    const double q = best.params.size() == 3 ? std::abs(best.params[1]) : 0.0;
    const double fmin = curve.front().frequency;
    const double fmax = curve.back().frequency;
    const std::string diag = "f0=" + std::to_string(f0) + " Hz, Q=" + std::to_string(q) +
                             ", cost=" + std::to_string(best.cost) +
                             ", iterations=" + std::to_string(best.iterations);
    if (!best.converged || !std::isfinite(best.cost)) {
        throw FitFailure("Lorentzian fit did not converge (" + diag + ")");
    }
    if (!(f0 >= fmin && f0 <= fmax) || !(q > 0.0) || !std::isfinite(q)) {
        throw FitFailure("fitted resonance outside the sampled range (" + diag + ")");
    }

    LorentzianFit fit;
    fit.f0 = f0;
    fit.q = q;
    fit.amplitude = best.params[2] * peak;
    fit.residual_norm = std::sqrt(2.0 * best.cost) * peak;
    fit.iterations = best.iterations;
    return fit;
}

}  // namespace nvodmr::resonator
