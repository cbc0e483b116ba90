#pragma once

// Command implementations behind the `nvodmr` tool. Each command maps a
// validated Config to the text of its report; file handling lives in the
// tool itself.

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "nvodmr/config.hpp"
#include "nvodmr/dynamics.hpp"
#include "nvodmr/io.hpp"
#include "nvodmr/readout_inference.hpp"
#include "nvodmr/resonator_design.hpp"
#include "nvodmr/spin_model.hpp"

namespace nvodmr::cli {

enum class Format { csv, json };

struct RunOptions {
    std::uint64_t seed = 1;
    Format format = Format::json;
};

struct CommandOutput {
    std::string primary;
    /// Extra files written next to the primary output: (path suffix, content).
    std::vector<std::pair<std::string, std::string>> sidecars;
};

namespace detail {

using nlohmann::json;

inline std::set<std::string> with(std::set<std::string> a, const std::set<std::string>& b) {
    a.insert(b.begin(), b.end());
    return a;
}

inline const std::set<std::string>& nv_keys() {
    static const std::set<std::string> keys{"d_zfs_hz",   "gamma_e_hz_per_tesla", "gamma_n_hz_per_tesla",
                                            "a_par_hz",   "a_perp_hz",            "q_quad_hz",
                                            "field_tesla", "polar_angle_rad",     "azimuth_rad"};
    return keys;
}

inline spin::NvParameters nv_params(const config::Config& c) {
    spin::NvParameters p;
    p.d_zfs = c.get_double("d_zfs_hz", p.d_zfs);
    p.gamma_e = c.get_double("gamma_e_hz_per_tesla", p.gamma_e);
    p.gamma_n = c.get_double("gamma_n_hz_per_tesla", p.gamma_n);
    p.a_par = c.get_double("a_par_hz", p.a_par);
    p.a_perp = c.get_double("a_perp_hz", p.a_perp);
    p.q_quad = c.get_double("q_quad_hz", p.q_quad);
    p.validate();
    return p;
}

/// Bias field, 2.78 T along the NV axis unless configured.
inline spin::StaticField field(const config::Config& c) {
    spin::StaticField f{c.get_double("field_tesla", 2.78), c.get_double("polar_angle_rad", 0.0),
                        c.get_double("azimuth_rad", 0.0)};
    f.validate();
    return f;
}

inline std::vector<double> linear_grid(double start, double stop, long long points) {
    if (points < 2) {
        throw InvalidParameter("grid needs at least 2 points");
    }
    if (!(stop > start)) {
        throw InvalidParameter("grid stop must exceed start");
    }
    std::vector<double> grid(static_cast<std::size_t>(points));
    for (long long k = 0; k < points; ++k) {
        grid[static_cast<std::size_t>(k)] = start + (stop - start) * static_cast<double>(k) / static_cast<double>(points - 1);
    }
    return grid;
}

inline std::string key_value_csv(const std::vector<std::pair<std::string, double>>& rows) {
    std::string out = "quantity,value\n";
    for (const auto& [k, v] : rows) {
        out.append(k).append(",").append(io::format_number(v)).append("\n");
    }
    return out;
}

inline json rows_json(const std::vector<std::pair<std::string, double>>& rows) {
    json j = json::object();
    for (const auto& [k, v] : rows) {
        j[k] = io::json_number(v);
    }
    return j;
}

inline std::string read_input(const config::Config& c) {
    const auto path = c.get("input_path");
    if (!path) {
        throw InvalidParameter("missing required key 'input_path'");
    }
    return io::read_file(*path);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// cavity
// ---------------------------------------------------------------------------

inline CommandOutput cmd_cavity(const config::Config& c, const RunOptions& opt) {
    c.require_known({"preset", "radius_m", "length_m", "resistivity_ohm_m", "mode", "reference_aspect",
                     "q_conductive", "q_dielectric", "q_radiative"});
    resonator::CylindricalCavity cav;
    const auto preset = c.get("preset");
    if (preset && *preset != "tm110_e_band") {
        throw InvalidParameter("unknown cavity preset '" + *preset + "' (known: tm110_e_band)");
    }
    if (preset) {
        cav.radius = c.get_double("radius_m", cav.radius);
        cav.length = c.get_double("length_m", cav.length);
    } else {
        cav.radius = c.require_double("radius_m");
        cav.length = c.require_double("length_m");
    }
    cav.conductor_resistivity = c.get_double("resistivity_ohm_m", cav.conductor_resistivity);
    cav.mode = resonator::parse_mode(c.get_string("mode", "TM110"));
    cav.validate();

    const double f = resonator::cavity_frequency(cav);
    const double reference_aspect = c.get_double("reference_aspect", 1.0);
    std::vector<std::pair<std::string, double>> rows{
        {"frequency_hz", f},
        {"skin_depth_m", resonator::skin_depth(cav.conductor_resistivity, f)},
        {"aspect_ratio", cav.aspect_ratio()},
        {"reference_aspect", reference_aspect},
        {"q_over_v_ratio_vs_reference", resonator::cavity_q_over_v_ratio(cav.aspect_ratio(), reference_aspect, cav.radius)},
        {"volume_m3", cav.volume()},
    };
    if (cav.mode.family == resonator::ModeFamily::TM && cav.mode.l == 0) {
        rows.emplace_back("conductor_q", resonator::cavity_conductor_q(cav));
    }
    resonator::LossBudget budget;
    if (auto q = c.get_double("q_conductive")) budget.q_conductive = *q;
    if (auto q = c.get_double("q_dielectric")) budget.q_dielectric = *q;
    if (auto q = c.get_double("q_radiative")) budget.q_radiative = *q;
    if (!budget.channels().empty()) {
        rows.emplace_back("combined_q", resonator::combine_quality_factors(budget));
    }

    if (opt.format == Format::csv) {
        return {detail::key_value_csv(rows), {}};
    }
    auto j = detail::rows_json(rows);
    j["mode"] = cav.mode.name();
    return {io::dump(j), {}};
}

// ---------------------------------------------------------------------------
// cpw
// ---------------------------------------------------------------------------

inline CommandOutput cmd_cpw(const config::Config& c, const RunOptions& opt) {
    c.require_known({"preset", "resonator_length_m", "waist_width_m", "dielectric_constant", "dielectric_thickness_m",
                     "superstrate_constant"});
    const std::string preset = c.get_string("preset", "wide_waist");
    resonator::CpwResonator r;
    if (preset == "wide_waist") {
        r = resonator::CpwResonator::wide_waist();
    } else if (preset == "narrow_waist") {
        r = resonator::CpwResonator::narrow_waist();
    } else {
        throw InvalidParameter("unknown cpw preset '" + preset + "' (known: wide_waist, narrow_waist)");
    }
    r.resonator_length = c.get_double("resonator_length_m", r.resonator_length);
    r.waist_width = c.get_double("waist_width_m", r.waist_width);
    r.dielectric_constant = c.get_double("dielectric_constant", r.dielectric_constant);
    r.dielectric_thickness = c.get_double("dielectric_thickness_m", r.dielectric_thickness);
    r.superstrate_constant = c.get_double("superstrate_constant", r.superstrate_constant);

    const std::vector<std::pair<std::string, double>> rows{
        {"halfwave_frequency_hz", resonator::cpw_halfwave_estimate(r)},
        {"effective_permittivity", r.effective_permittivity()},
        {"resonator_length_m", r.resonator_length},
    };
    if (opt.format == Format::csv) {
        return {detail::key_value_csv(rows), {}};
    }
    auto j = detail::rows_json(rows);
    j["estimate"] = "first-order half-wave, accuracy within a factor of about 1.5";
    return {io::dump(j), {}};
}

// ---------------------------------------------------------------------------
// odmr
// ---------------------------------------------------------------------------

struct OdmrResult {
    std::vector<double> frequencies;
    std::vector<double> signal;
    std::vector<dynamics::Dip> dips;
};

inline dynamics::FluorescenceModel fluorescence(const config::Config& c) {
    dynamics::FluorescenceModel fl;
    fl.rate_bright = c.get_double("rate_bright_cps", fl.rate_bright);
    fl.rate_dark = c.get_double("rate_dark_cps", fl.rate_dark);
    fl.readout_window = c.get_double("readout_window_s", fl.readout_window);
    fl.polarization_fidelity = c.get_double("polarization_fidelity", fl.polarization_fidelity);
    fl.validate();
    return fl;
}

inline const std::set<std::string>& fluorescence_keys() {
    static const std::set<std::string> keys{"rate_bright_cps", "rate_dark_cps", "readout_window_s",
                                            "polarization_fidelity"};
    return keys;
}

/// Default drive: Omega = 300 kHz, pulse length a pi pulse.
inline OdmrResult run_odmr(const config::Config& c) {
    c.require_known(detail::with(detail::with(detail::nv_keys(), fluorescence_keys()),
                                 {"freq_start_hz", "freq_stop_hz", "freq_points", "b1_tesla", "pulse_duration_s",
                                  "min_dip_depth", "dip_relative_depth"}));
    const auto params = detail::nv_params(c);
    const auto fld = detail::field(c);
    const auto fl = fluorescence(c);
    const double b1 = c.get_double("b1_tesla", dynamics::b1_from_rabi(params, 300e3));
    const double bare = dynamics::rabi_from_b1(params, b1);
    const double pulse = c.get_double("pulse_duration_s", bare > 0.0 ? dynamics::pi_pulse_duration(bare) : 0.0);

    OdmrResult r;
    r.frequencies = detail::linear_grid(c.get_double("freq_start_hz", 75.04e9), c.get_double("freq_stop_hz", 75.07e9),
                                        c.get_int("freq_points", 601));
    r.signal = dynamics::odmr_spectrum(params, fld, fl, r.frequencies, b1, pulse);
    r.dips = dynamics::find_dips(r.frequencies, r.signal, c.get_double("min_dip_depth", 1e-3),
                                 c.get_double("dip_relative_depth", 0.5));
    return r;
}

inline CommandOutput cmd_odmr(const config::Config& c, const RunOptions& opt) {
    const auto r = run_odmr(c);
    if (opt.format == Format::csv) {
        return {io::write_xy_csv("frequency_hz", "signal", r.frequencies, r.signal), {}};
    }
    detail::json j;
    auto dips = detail::json::array();
    for (const auto& d : r.dips) {
        dips.push_back({{"frequency_hz", io::json_number(d.frequency)}, {"depth", io::json_number(d.depth)}});
    }
    j["dips"] = dips;
    auto points = detail::json::array();
    for (std::size_t k = 0; k < r.frequencies.size(); ++k) {
        points.push_back({{"frequency_hz", io::json_number(r.frequencies[k])}, {"signal", io::json_number(r.signal[k])}});
    }
    j["spectrum"] = points;
    return {io::dump(j), {}};
}

// ---------------------------------------------------------------------------
// rabi
// ---------------------------------------------------------------------------

/// Flip probability versus pulse length. Works for electron (rabi_hz or
/// b1_tesla) and nuclear (rabi_hz) drives alike.
inline CommandOutput cmd_rabi(const config::Config& c, const RunOptions& opt) {
    c.require_known({"rabi_hz", "b1_tesla", "gamma_e_hz_per_tesla", "detuning_hz", "duration_start_s",
                     "duration_stop_s", "duration_points", "amplitude_noise", "fit"});
    spin::NvParameters params;
    params.gamma_e = c.get_double("gamma_e_hz_per_tesla", params.gamma_e);
    double rabi = 906e3;
    if (c.has("rabi_hz") && c.has("b1_tesla")) {
        throw InvalidParameter("give either rabi_hz or b1_tesla, not both");
    }
    if (c.has("b1_tesla")) {
        rabi = dynamics::rabi_from_b1(params, c.require_double("b1_tesla"));
    } else {
        rabi = c.get_double("rabi_hz", rabi);
    }
    const auto times = detail::linear_grid(c.get_double("duration_start_s", 0.0), c.get_double("duration_stop_s", 5e-6),
                                           c.get_int("duration_points", 101));
    auto values = dynamics::rabi_oscillation(c.get_double("detuning_hz", 0.0), rabi, times);
    const double noise = c.get_double("amplitude_noise", 0.0);
    nvodmr::detail::require_non_negative(noise, "amplitude_noise");
    if (noise > 0.0) {
        std::mt19937_64 rng(opt.seed);
        std::normal_distribution<double> gauss(0.0, noise);
        for (double& v : values) {
            v += gauss(rng);
        }
    }
    if (opt.format == Format::csv) {
        return {io::write_xy_csv("duration_s", "flip_probability", times, values), {}};
    }
    detail::json j;
    j["rabi_hz"] = io::json_number(rabi);
    if (c.get_bool("fit", true)) {
        const auto fit = dynamics::fit_rabi_oscillation(times, values);
        j["fit"] = {{"frequency_hz", io::json_number(fit.frequency)},
                    {"amplitude", io::json_number(fit.amplitude)},
                    {"offset", io::json_number(fit.offset)},
                    {"residual", io::json_number(fit.residual_norm)}};
    }
    auto points = detail::json::array();
    for (std::size_t k = 0; k < times.size(); ++k) {
        points.push_back({{"duration_s", io::json_number(times[k])}, {"flip_probability", io::json_number(values[k])}});
    }
    j["oscillation"] = points;
    return {io::dump(j), {}};
}

// ---------------------------------------------------------------------------
// nmr
// ---------------------------------------------------------------------------

inline CommandOutput cmd_nmr(const config::Config& c, const RunOptions& opt) {
    c.require_known(detail::with(detail::nv_keys(), {"rf_start_hz", "rf_stop_hz", "rf_points", "rf_rabi_hz",
                                                     "pulse_duration_s", "m_s", "initial_m_i"}));
    const auto params = detail::nv_params(c);
    const auto fld = detail::field(c);
    dynamics::NmrSettings settings;
    settings.m_s = static_cast<int>(c.get_int("m_s", settings.m_s));
    settings.initial_m_i = static_cast<int>(c.get_int("initial_m_i", settings.initial_m_i));
    const double rf_rabi = c.get_double("rf_rabi_hz", 20e3);
    const double pulse = c.get_double("pulse_duration_s", rf_rabi > 0.0 ? dynamics::pi_pulse_duration(rf_rabi) : 0.0);

    const auto nuclear = spin::transitions(params, fld, spin::TransitionKind::nuclear);
    const int neighbour = settings.initial_m_i == 1 ? 0 : settings.initial_m_i + 1;
    const double center = spin::find_nuclear_line(nuclear, settings.m_s, settings.initial_m_i, neighbour).frequency;
    const auto grid = detail::linear_grid(c.get_double("rf_start_hz", center - 200e3),
                                          c.get_double("rf_stop_hz", center + 200e3), c.get_int("rf_points", 401));
    const auto flip = dynamics::nmr_scan(params, fld, grid, rf_rabi, pulse, settings);
    if (opt.format == Format::csv) {
        return {io::write_xy_csv("frequency_hz", "flip_probability", grid, flip), {}};
    }
    detail::json j;
    j["line_frequency_hz"] = io::json_number(center);
    auto points = detail::json::array();
    for (std::size_t k = 0; k < grid.size(); ++k) {
        points.push_back({{"frequency_hz", io::json_number(grid[k])}, {"flip_probability", io::json_number(flip[k])}});
    }
    j["scan"] = points;
    return {io::dump(j), {}};
}

// ---------------------------------------------------------------------------
// trace simulate / analyze
// ---------------------------------------------------------------------------

inline readout::TwoStatePoissonHmm trace_model(const config::Config& c) {
    readout::TwoStatePoissonHmm m;
    const double stay_high = c.get_double("stay_high", 0.995);
    const double stay_low = c.get_double("stay_low", 0.995);
    m.transition = {{{stay_high, 1.0 - stay_high}, {1.0 - stay_low, stay_low}}};
    m.means = {c.get_double("mean_high", 120.0), c.get_double("mean_low", 40.0)};
    const double start_high = c.get_double("initial_high", 0.5);
    m.initial = {start_high, 1.0 - start_high};
    m.validate();
    return m;
}

/// Primary output is the trace CSV; ground truth goes to the `.truth.csv` sidecar.
inline CommandOutput cmd_trace_simulate(const config::Config& c, const RunOptions& opt) {
    c.require_known({"n_bins", "stay_high", "stay_low", "mean_high", "mean_low", "initial_high", "bin_duration_s"});
    const auto model = trace_model(c);
    const long long n = c.get_int("n_bins", 100000);
    if (n < 1) {
        throw InvalidParameter("n_bins must be >= 1");
    }
    const auto trace = readout::synthesize_trace(model, static_cast<std::size_t>(n), opt.seed,
                                                 c.get_double("bin_duration_s", 10e-3));
    return {io::write_trace_csv(trace), {{".truth.csv", io::write_states_csv(*trace.states)}}};
}

struct TraceAnalysis {
    readout::EmResult em;
    readout::HistogramFit histogram;
    std::vector<readout::State> path;
    std::optional<readout::DwellTimes> dwell;
    std::string dwell_error;
};

inline TraceAnalysis analyze_trace(const readout::PhotonTrace& trace, int max_iterations = 500) {
    TraceAnalysis a;
    readout::EmOptions em_opt;
    em_opt.max_iterations = max_iterations;
    a.em = readout::estimate_parameters(trace.counts, em_opt);
    a.histogram = readout::fit_two_poissonians(trace.counts);
    a.path = readout::viterbi(a.em.model, trace.counts);
    try {
        a.dwell = readout::dwell_time_t1(a.path, trace.bin_duration);
    } catch (const InsufficientStatistics& e) {
        a.dwell_error = e.what();
    }
    return a;
}

inline CommandOutput cmd_trace_analyze(const config::Config& c, const RunOptions& opt) {
    c.require_known({"input_path", "bin_duration_s", "max_iterations"});
    std::istringstream in(detail::read_input(c));
    const auto trace = io::read_trace_csv(in, c.get_double("bin_duration_s", 10e-3));
    const auto a = analyze_trace(trace, static_cast<int>(c.get_int("max_iterations", 500)));
    const auto runs = readout::run_length_encode(a.path);

    if (opt.format == Format::csv) {
        std::string out = "state,length\n";
        for (const auto& r : runs) {
            out.append(std::to_string(static_cast<int>(r.state))).append(",").append(std::to_string(r.length)).append("\n");
        }
        return {out, {}};
    }
    detail::json j;
    j["bins"] = trace.counts.size();
    j["bin_duration_s"] = io::json_number(trace.bin_duration);
    j["model"] = io::to_json(a.em.model);
    j["em"] = {{"iterations", a.em.iterations},
               {"converged", a.em.converged},
               {"monotone", a.em.monotone},
               {"restarted", a.em.restarted},
               {"boundary_stay", a.em.boundary_stay},
               {"log_likelihood", io::json_number(a.em.log_likelihood.back())}};
    j["histogram"] = io::to_json(a.histogram);
    j["separability"] = io::json_number(a.histogram.separability);
    j["non_separable"] = !a.histogram.separable;
    if (a.dwell) {
        j["t1"] = {{"high", io::to_json(a.dwell->high)}, {"low", io::to_json(a.dwell->low)}};
    } else {
        j["t1"] = nullptr;
        j["t1_error"] = a.dwell_error;
    }
    j["viterbi_rle"] = io::to_json(runs);
    return {io::dump(j), {}};
}

// ---------------------------------------------------------------------------
// fit lorentzian
// ---------------------------------------------------------------------------

inline CommandOutput cmd_fit_lorentzian(const config::Config& c, const RunOptions& opt) {
    c.require_known({"input_path"});
    std::istringstream in(detail::read_input(c));
    const auto curve = io::read_resonance_csv(in);
    const auto fit = resonator::fit_lorentzian(curve);
    if (opt.format == Format::csv) {
        return {detail::key_value_csv({{"f0_hz", fit.f0},
                                       {"q", fit.q},
                                       {"amplitude", fit.amplitude},
                                       {"residual", fit.residual_norm}}),
                {}};
    }
    return {io::dump(io::to_json(fit)), {}};
}

}  // namespace nvodmr::cli
